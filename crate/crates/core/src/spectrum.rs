//! Diagonalization, level scans and avoided-crossing analysis.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rayon::prelude::*;

use crate::hamiltonian::{HamiltonianTerms, SystemParams};
use crate::hilbert::{
    basis_vector, hermiticity_error, max_abs, BasisState, HilbertSpace, OperatorMatrix,
    StateVector,
};
use crate::{Error, Result, C64};

/// Eigenvalues in ascending order and the matching orthonormal eigenvectors
/// (columns of `vectors`), in whatever basis the input matrix was written in.
#[derive(Debug, Clone)]
pub struct EigenDecomposition {
    pub energies: Vec<f64>,
    pub vectors: DMatrix<C64>,
}

impl EigenDecomposition {
    pub fn len(&self) -> usize {
        self.energies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.energies.is_empty()
    }

    pub fn vector(&self, n: usize) -> DVector<C64> {
        self.vectors.column(n).into_owned()
    }

    pub fn state(&self, space: &Arc<HilbertSpace>, n: usize) -> Result<StateVector> {
        StateVector::from_amplitudes(space.clone(), self.vector(n))
    }

    /// `|<target|Psi_n>|^2` for every level.
    pub fn overlaps(&self, target: &DVector<C64>) -> Vec<f64> {
        (0..self.len())
            .map(|n| self.vectors.column(n).dotc(target).norm_sqr())
            .collect()
    }
}

/// Full decomposition of a Hermitian operator.
pub fn diagonalize(h: &OperatorMatrix) -> Result<EigenDecomposition> {
    diagonalize_hermitian(h.matrix())
}

/// Same as [`diagonalize`] for a bare matrix.
pub fn diagonalize_hermitian(h: &DMatrix<C64>) -> Result<EigenDecomposition> {
    if !h.is_square() {
        return Err(Error::invalid("cannot diagonalize a non-square matrix"));
    }
    let scale = max_abs(h).max(1.0);
    let herm = hermiticity_error(h);
    if herm > 1e-12 * scale {
        return Err(Error::invalid(format!(
            "matrix is not Hermitian (max |H - H^+| = {herm:e})"
        )));
    }

    let (values, vectors) = if h.iter().all(|z| z.im == 0.0) {
        // Real symmetric matrices go through the real solver, several times
        // faster than the complex one.
        let eig = SymmetricEigen::new(h.map(|z| z.re));
        (eig.eigenvalues, eig.eigenvectors.map(|x| C64::new(x, 0.0)))
    } else {
        let eig = SymmetricEigen::new(h.clone());
        (eig.eigenvalues, eig.eigenvectors)
    };

    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&i, &j| values[i].total_cmp(&values[j]));
    let energies = order.iter().map(|&i| values[i]).collect();
    let vectors = DMatrix::from_fn(h.nrows(), h.ncols(), |r, c| vectors[(r, order[c])]);
    Ok(EigenDecomposition { energies, vectors })
}

/// Eigenvalues only, ascending.
pub fn eigenvalues(h: &DMatrix<C64>) -> Vec<f64> {
    let mut values: Vec<f64> = if h.iter().all(|z| z.im == 0.0) {
        h.map(|z| z.re).symmetric_eigenvalues().iter().copied().collect()
    } else {
        h.clone().symmetric_eigenvalues().iter().copied().collect()
    };
    values.sort_by(f64::total_cmp);
    values
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LevelMatch {
    pub index: usize,
    pub overlap: f64,
}

/// Level with the largest overlap with a bare state. Fails when no level has
/// overlap of at least 1/2.
pub fn identify_level(decomp: &EigenDecomposition, bare_target: &StateVector) -> Result<LevelMatch> {
    identify_vector(decomp, bare_target.amplitudes())
}

pub fn identify_vector(decomp: &EigenDecomposition, target: &DVector<C64>) -> Result<LevelMatch> {
    let (index, overlap) = decomp
        .overlaps(target)
        .into_iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(&b.1))
        .ok_or_else(|| Error::invalid("empty decomposition"))?;
    if overlap < 0.5 {
        return Err(Error::AmbiguousLabel { index, overlap });
    }
    Ok(LevelMatch { index, overlap })
}

#[derive(Debug, Clone, PartialEq)]
pub struct LevelScanPoint {
    pub omega_q: f64,
    pub energies: Vec<f64>,
}

pub const DEFAULT_SCAN_LEVELS: usize = 12;

/// Lowest `levels` energies at every qubit frequency of `omega_q_grid`.
pub fn scan_levels(
    space: &Arc<HilbertSpace>,
    params: &SystemParams,
    omega_q_grid: &[f64],
    levels: usize,
) -> Result<Vec<LevelScanPoint>> {
    if omega_q_grid.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::invalid("qubit-frequency grid must be ascending"));
    }
    if levels == 0 || levels > space.dimension() {
        return Err(Error::invalid(format!(
            "requested {levels} levels from a space of dimension {}",
            space.dimension()
        )));
    }
    params.validate()?;
    let terms = HamiltonianTerms::new(space);
    omega_q_grid
        .par_iter()
        .map(|&w| {
            let p = params.with_omega_q(w);
            p.validate()?;
            let mut energies = eigenvalues(terms.assemble(&p).matrix());
            energies.truncate(levels);
            Ok(LevelScanPoint {
                omega_q: w,
                energies,
            })
        })
        .collect()
}

/// Minimum-gap information of an avoided crossing between two tracked levels.
#[derive(Debug, Clone, PartialEq)]
pub struct CrossingInfo {
    pub omega_q_star: f64,
    pub min_splitting: f64,
    pub g_eff_numeric: f64,
    /// Eigenlevel indices (ascending energy order) of the tracked pair at
    /// `omega_q_star`.
    pub level_indices: [usize; 2],
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CrossingSearch {
    /// Number of points of the coarse bracketing scan.
    pub coarse_points: usize,
    /// Golden-section stopping tolerance on the qubit frequency, relative.
    pub rel_tol: f64,
}

impl Default for CrossingSearch {
    fn default() -> Self {
        CrossingSearch {
            coarse_points: 41,
            rel_tol: 1e-8,
        }
    }
}

/// Two levels with the largest combined weight on the columns of `reference`.
/// Returned in ascending index order.
pub fn tracked_pair(decomp: &EigenDecomposition, reference: &DMatrix<C64>) -> [usize; 2] {
    let projections = decomp.vectors.adjoint() * reference;
    let mut best = [(usize::MAX, -1.0f64); 2];
    for n in 0..decomp.len() {
        let w: f64 = projections.row(n).iter().map(|z| z.norm_sqr()).sum();
        if w > best[0].1 {
            best[1] = best[0];
            best[0] = (n, w);
        } else if w > best[1].1 {
            best[1] = (n, w);
        }
    }
    let (i, j) = (best[0].0, best[1].0);
    [i.min(j), i.max(j)]
}

fn pair_columns(decomp: &EigenDecomposition, levels: [usize; 2]) -> DMatrix<C64> {
    DMatrix::from_columns(&[
        decomp.vectors.column(levels[0]),
        decomp.vectors.column(levels[1]),
    ])
}

fn bare_pair_columns(space: &Arc<HilbertSpace>, pair: [BasisState; 2]) -> Result<DMatrix<C64>> {
    let a = basis_vector(space, &pair[0])?;
    let b = basis_vector(space, &pair[1])?;
    Ok(DMatrix::from_columns(&[a.amplitudes().clone(), b.amplitudes().clone()]))
}

/// Energy gap between the two levels carrying the bare pair, at one qubit
/// frequency.
pub fn pair_gap(
    space: &Arc<HilbertSpace>,
    params: &SystemParams,
    omega_q: f64,
    pair: [BasisState; 2],
) -> Result<f64> {
    let reference = bare_pair_columns(space, pair)?;
    let decomp = diagonalize(&HamiltonianTerms::new(space).assemble(&params.with_omega_q(omega_q)))?;
    let [lo, hi] = tracked_pair(&decomp, &reference);
    Ok(decomp.energies[hi] - decomp.energies[lo])
}

pub fn find_avoided_crossing(
    space: &Arc<HilbertSpace>,
    params: &SystemParams,
    omega_q_guess: f64,
    half_window: f64,
    bare_pair: [BasisState; 2],
) -> Result<CrossingInfo> {
    find_avoided_crossing_with(
        space,
        params,
        omega_q_guess,
        half_window,
        bare_pair,
        CrossingSearch::default(),
    )
}

/// Locates the minimum splitting between the levels carrying `bare_pair`
/// within `omega_q_guess +- half_window`.
///
/// A coarse scan tracks the pair by state-overlap continuity from the window
/// edge (level order swaps at crossings, so energy order is useless), checks
/// that the gap is unimodal, then refines with golden-section search.
pub fn find_avoided_crossing_with(
    space: &Arc<HilbertSpace>,
    params: &SystemParams,
    omega_q_guess: f64,
    half_window: f64,
    bare_pair: [BasisState; 2],
    search: CrossingSearch,
) -> Result<CrossingInfo> {
    if !(half_window > 0.0) || omega_q_guess - half_window <= 0.0 {
        return Err(Error::invalid(format!(
            "invalid search window {omega_q_guess} +- {half_window}"
        )));
    }
    if search.coarse_points < 5 {
        return Err(Error::invalid("coarse scan needs at least 5 points"));
    }
    params.validate()?;
    let terms = HamiltonianTerms::new(space);
    let m = search.coarse_points;
    let lo = omega_q_guess - half_window;
    let step = 2.0 * half_window / (m - 1) as f64;
    let grid: Vec<f64> = (0..m).map(|k| lo + step * k as f64).collect();

    let decomps = grid
        .par_iter()
        .map(|&w| diagonalize(&terms.assemble(&params.with_omega_q(w))))
        .collect::<Result<Vec<_>>>()?;

    let mut reference = bare_pair_columns(space, bare_pair)?;
    let mut gaps = Vec::with_capacity(m);
    let mut subspaces = Vec::with_capacity(m);
    for d in &decomps {
        let levels = tracked_pair(d, &reference);
        gaps.push(d.energies[levels[1]] - d.energies[levels[0]]);
        reference = pair_columns(d, levels);
        subspaces.push(reference.clone());
    }

    let (jmin, _) = gaps
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .expect("non-empty grid");
    if jmin == 0 || jmin == m - 1 {
        return Err(Error::SearchFailure(format!(
            "gap minimum lies on the window edge at omega_q = {}",
            grid[jmin]
        )));
    }
    let noise = 1e-12 * gaps.iter().fold(1.0f64, |a, &b| a.max(b));
    let unimodal = gaps[..=jmin].windows(2).all(|w| w[1] <= w[0] + noise)
        && gaps[jmin..].windows(2).all(|w| w[1] >= w[0] - noise);
    if !unimodal {
        return Err(Error::SearchFailure(format!(
            "gap is not unimodal on [{}, {}]",
            grid[0],
            grid[m - 1]
        )));
    }

    let reference = &subspaces[jmin];
    let eval = |w: f64| -> Result<(f64, [usize; 2])> {
        let d = diagonalize(&terms.assemble(&params.with_omega_q(w)))?;
        let levels = tracked_pair(&d, reference);
        Ok((d.energies[levels[1]] - d.energies[levels[0]], levels))
    };

    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (grid[jmin - 1], grid[jmin + 1]);
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let mut fc = eval(c)?.0;
    let mut fd = eval(d)?.0;
    while (b - a) > search.rel_tol * omega_q_guess.abs() {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = eval(c)?.0;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = eval(d)?.0;
        }
    }
    let omega_q_star = 0.5 * (a + b);
    let (min_splitting, level_indices) = eval(omega_q_star)?;
    Ok(CrossingInfo {
        omega_q_star,
        min_splitting,
        g_eff_numeric: 0.5 * min_splitting,
        level_indices,
    })
}

/// Dressed counterparts of two bare states that hybridize at an avoided
/// crossing.
///
/// The bare states are projected onto the span of the two tracked levels and
/// symmetrically (Lowdin) orthonormalized, which gives the orthonormal pair
/// closest to the bare states. Away from the crossing this reduces to the two
/// eigenstates themselves; at the crossing it recovers the "unhybridized"
/// dressed states that each eigenstate is an equal mixture of.
pub fn dressed_pair_states(
    decomp: &EigenDecomposition,
    levels: [usize; 2],
    bare: [&DVector<C64>; 2],
) -> Result<[DVector<C64>; 2]> {
    let q = pair_columns(decomp, levels);
    let coords = DMatrix::from_columns(&[q.adjoint() * bare[0], q.adjoint() * bare[1]]);
    for (k, col) in coords.column_iter().enumerate() {
        let weight = col.norm_squared();
        if weight < 0.5 {
            return Err(Error::AmbiguousLabel {
                index: levels[k],
                overlap: weight,
            });
        }
    }
    let overlap = coords.adjoint() * &coords;
    let eig = SymmetricEigen::new(overlap);
    let inv_sqrt = &eig.eigenvectors
        * DMatrix::from_diagonal(&eig.eigenvalues.map(|l| C64::new(l.powf(-0.5), 0.0)))
        * eig.eigenvectors.adjoint();
    let orth = q * coords * inv_sqrt;
    Ok([orth.column(0).into_owned(), orth.column(1).into_owned()])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hamiltonian::build_hamiltonian;
    use crate::hilbert::{bare_state, build_space, Qubit};
    use proptest::prelude::*;
    use std::f64::consts::FRAC_PI_6;

    const E000: BasisState = BasisState::new(0, 0, 0, Qubit::Excited);
    const G110: BasisState = BasisState::new(1, 1, 0, Qubit::Ground);

    fn bell_params(g: f64) -> SystemParams {
        SystemParams::default().with_couplings([g, g, 0.0])
    }

    #[test]
    fn uncoupled_energies_are_bare_sums() {
        let space = build_space([2, 2, 2], None).unwrap();
        let p = SystemParams::default().uncoupled().with_omega_q(2.2);
        let d = diagonalize(&build_hamiltonian(&space, &p)).unwrap();
        let mut bare: Vec<f64> = space
            .basis()
            .iter()
            .map(|s| {
                s.photons[0] as f64 + 1.5 * s.photons[1] as f64 + 1.75 * s.photons[2] as f64
                    + s.qubit.sigma_z() * 1.1
            })
            .collect();
        bare.sort_by(f64::total_cmp);
        for (e, b) in d.energies.iter().zip(&bare) {
            assert!((e - b).abs() < 1e-13);
        }
    }

    #[test]
    fn decomposition_invariants() {
        let space = build_space([3, 3, 2], None).unwrap();
        let h = build_hamiltonian(&space, &SystemParams::default());
        let d = diagonalize(&h).unwrap();
        let norm = h.max_abs() * space.dimension() as f64;
        assert!(d.energies.windows(2).all(|w| w[0] <= w[1]));
        for n in 0..d.len() {
            let v = d.vector(n);
            let r = h.matrix() * &v - &v * C64::new(d.energies[n], 0.0);
            assert!(r.norm() <= 1e-10 * norm);
        }
        let gram = d.vectors.adjoint() * &d.vectors;
        let id = DMatrix::<C64>::identity(d.len(), d.len());
        assert!(max_abs(&(gram - id)) < 1e-10);
    }

    #[test]
    fn complex_input_uses_complex_solver() {
        let m = DMatrix::from_row_slice(
            2,
            2,
            &[
                C64::new(1.0, 0.0),
                C64::new(0.0, -0.5),
                C64::new(0.0, 0.5),
                C64::new(-1.0, 0.0),
            ],
        );
        let d = diagonalize_hermitian(&m).unwrap();
        let expected = (1.0f64 + 0.25).sqrt();
        assert!((d.energies[0] + expected).abs() < 1e-14);
        assert!((d.energies[1] - expected).abs() < 1e-14);
    }

    #[test]
    fn rejects_non_hermitian() {
        let m = DMatrix::from_row_slice(
            2,
            2,
            &[
                C64::new(1.0, 0.0),
                C64::new(0.3, 0.0),
                C64::new(0.0, 0.0),
                C64::new(1.0, 0.0),
            ],
        );
        assert!(matches!(
            diagonalize_hermitian(&m),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn dressed_horizontal_level_near_two_and_a_half() {
        // far below the |0,0,0,e> crossing: the lowest "flat" level above the
        // one-photon states is |1,1,0,g> shifted slightly by dressing
        let space = build_space([4, 4, 4], None).unwrap();
        let p = SystemParams::default().with_omega_q(0.5);
        let d = diagonalize(&build_hamiltonian(&space, &p)).unwrap();
        let psi1 = bare_state(&space, 1, 1, 0, Qubit::Ground).unwrap();
        let vac = bare_state(&space, 0, 0, 0, Qubit::Ground).unwrap();
        let l1 = identify_level(&d, &psi1).unwrap();
        let l0 = identify_level(&d, &vac).unwrap();
        let relative = d.energies[l1.index] - d.energies[l0.index];
        assert!((relative - 2.5).abs() < 0.05);
        assert!((relative - 2.5).abs() > 1e-5);
    }

    #[test]
    fn single_mode_jaynes_cummings_splitting() {
        // one mode, transverse coupling, near single-photon resonance: the
        // splitting of {|1,g>,|0,e>} follows the 2x2 block sqrt(delta^2 + 4 g^2)
        let space = build_space([3, 1, 1], None).unwrap();
        let g = 0.005;
        let delta = 0.01;
        let p = SystemParams {
            theta: 0.0,
            ..SystemParams::default()
        }
        .with_couplings([g, 0.0, 0.0])
        .with_omega_q(1.0 + delta);
        let d = diagonalize(&build_hamiltonian(&space, &p)).unwrap();
        let pair = [
            BasisState::new(1, 0, 0, Qubit::Ground),
            BasisState::new(0, 0, 0, Qubit::Excited),
        ];
        let [lo, hi] = tracked_pair(&d, &bare_pair_columns(&space, pair).unwrap());
        let gap = d.energies[hi] - d.energies[lo];
        let block = (delta * delta + 4.0 * g * g).sqrt();
        assert!((gap - block).abs() / block < 1e-2);
    }

    #[test]
    fn identify_level_exact_when_uncoupled() {
        let space = build_space([2, 2, 1], None).unwrap();
        let p = SystemParams::default().uncoupled().with_omega_q(2.123);
        let d = diagonalize(&build_hamiltonian(&space, &p)).unwrap();
        for s in space.basis() {
            let m = identify_level(&d, &basis_vector(&space, s).unwrap()).unwrap();
            assert!((m.overlap - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn identify_level_ambiguous_at_crossing() {
        let space = build_space([4, 4, 1], None).unwrap();
        let p = bell_params(0.1);
        let x = find_avoided_crossing(&space, &p, 2.5, 0.15, [E000, G110]).unwrap();
        let d = diagonalize(&build_hamiltonian(&space, &p.with_omega_q(x.omega_q_star))).unwrap();
        let e = basis_vector(&space, &E000).unwrap();
        let ov = d.overlaps(e.amplitudes());
        for &l in &x.level_indices {
            assert!((ov[l] - 0.5).abs() < 0.05, "overlap {}", ov[l]);
        }
        assert!(matches!(
            identify_level(&d, &e),
            Err(Error::AmbiguousLabel { .. })
        ));
    }

    #[test]
    fn far_detuned_psi1_is_nearly_bare() {
        let space = build_space([4, 4, 1], None).unwrap();
        let p = bell_params(0.1).with_omega_q(4.0);
        let d = diagonalize(&build_hamiltonian(&space, &p)).unwrap();
        let m = identify_level(&d, &bare_state(&space, 1, 1, 0, Qubit::Ground).unwrap()).unwrap();
        assert!(m.overlap > 0.95);
    }

    #[test]
    fn scan_shape_and_flat_photonic_levels() {
        let space = build_space([3, 3, 2], None).unwrap();
        let grid: Vec<f64> = (0..6).map(|k| 3.0 + 0.1 * k as f64).collect();
        let scan = scan_levels(&space, &SystemParams::default(), &grid, DEFAULT_SCAN_LEVELS).unwrap();
        assert_eq!(scan.len(), grid.len());
        assert!(scan.iter().all(|p| p.energies.len() == DEFAULT_SCAN_LEVELS));
        // relative to the ground level the first excitation stays ~ omega_a
        for p in &scan {
            let rel = p.energies[1] - p.energies[0];
            assert!((rel - 1.0).abs() < 0.1, "{rel}");
        }
        assert!(scan_levels(&space, &SystemParams::default(), &[1.0, 0.5], 3).is_err());
        assert!(scan_levels(&space, &SystemParams::default(), &[1.0], 10_000).is_err());
    }

    #[test]
    fn bell_crossing_near_closed_form() {
        let space = build_space([4, 4, 1], None).unwrap();
        let p = bell_params(0.1);
        let x = find_avoided_crossing(&space, &p, 2.5, 0.15, [E000, G110]).unwrap();
        let closed = 0.1 * 0.1 * 2.5 * (2.0 * FRAC_PI_6).sin() / 1.5;
        assert!((x.g_eff_numeric - closed).abs() / closed < 0.05);
        assert!((x.omega_q_star - 2.5).abs() < 0.1);
    }

    #[test]
    fn zero_coupling_levels_cross_exactly() {
        let space = build_space([2, 2, 1], None).unwrap();
        let p = bell_params(0.0);
        let gap = pair_gap(&space, &p, 2.5, [E000, G110]).unwrap();
        assert!(gap < 1e-10);
        let x = find_avoided_crossing(&space, &p, 2.5, 0.1, [E000, G110]).unwrap();
        assert!(x.min_splitting < 1e-6);
    }

    #[test]
    fn quadratic_minimum_is_symmetric() {
        let space = build_space([3, 3, 1], None).unwrap();
        let p = bell_params(0.1);
        let x = find_avoided_crossing(&space, &p, 2.5, 0.15, [E000, G110]).unwrap();
        let delta = 2e-3;
        let up = pair_gap(&space, &p, x.omega_q_star + delta, [E000, G110]).unwrap();
        let down = pair_gap(&space, &p, x.omega_q_star - delta, [E000, G110]).unwrap();
        let rise = up - x.min_splitting;
        assert!(rise > 0.0);
        assert!((up - down).abs() < 0.05 * rise);
    }

    #[test]
    fn monotone_in_coupling_scale() {
        let space = build_space([3, 3, 1], None).unwrap();
        let mut prev = 0.0;
        for g in [0.01, 0.05, 0.1, 0.15, 0.2] {
            let x = find_avoided_crossing(&space, &bell_params(g), 2.5, 0.15, [E000, G110]).unwrap();
            assert!(x.g_eff_numeric > prev);
            prev = x.g_eff_numeric;
        }
    }

    #[test]
    fn window_without_minimum_fails() {
        let space = build_space([2, 2, 1], None).unwrap();
        let r = find_avoided_crossing(&space, &bell_params(0.1), 2.9, 0.1, [E000, G110]);
        assert!(matches!(r, Err(Error::SearchFailure(_))));
    }

    #[test]
    fn dressed_pair_reconstructs_bare_like_states() {
        let space = build_space([4, 4, 1], None).unwrap();
        let p = bell_params(0.1);
        let x = find_avoided_crossing(&space, &p, 2.5, 0.15, [E000, G110]).unwrap();
        let d = diagonalize(&build_hamiltonian(&space, &p.with_omega_q(x.omega_q_star))).unwrap();
        let e = basis_vector(&space, &E000).unwrap();
        let f = basis_vector(&space, &G110).unwrap();
        let [de, df] =
            dressed_pair_states(&d, x.level_indices, [e.amplitudes(), f.amplitudes()]).unwrap();
        assert!((de.norm() - 1.0).abs() < 1e-12);
        assert!(de.dotc(&df).norm() < 1e-12);
        assert!(e.amplitudes().dotc(&de).norm_sqr() > 0.9);
        assert!(f.amplitudes().dotc(&df).norm_sqr() > 0.9);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn random_hermitian_residuals(seed in proptest::collection::vec(-1.0f64..1.0, 72)) {
            let n = 6;
            let mut m = DMatrix::<C64>::zeros(n, n);
            let mut k = 0;
            for i in 0..n {
                for j in i..n {
                    let z = if i == j { C64::new(seed[k], 0.0) } else { C64::new(seed[k], seed[k + 1]) };
                    k += 2;
                    m[(i, j)] = z;
                    m[(j, i)] = z.conj();
                }
            }
            let d = diagonalize_hermitian(&m).unwrap();
            for l in 0..n {
                let v = d.vector(l);
                let r = &m * &v - &v * C64::new(d.energies[l], 0.0);
                prop_assert!(r.norm() < 1e-10 * (1.0 + max_abs(&m)));
            }
            prop_assert!(d.energies.windows(2).all(|w| w[0] <= w[1]));
        }
    }
}
