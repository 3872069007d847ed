//! Decomposition of a relaxed assignment into a convex combination of
//! 0/1 assignment patterns, and the ε-periodic switching schedule built
//! from it.
//!
//! The optimal fractions form a doubly substochastic matrix once padded
//! square; extending it to a doubly stochastic matrix of twice the size
//! allows peeling off permutation matrices one perfect matching at a
//! time. Truncating each permutation back to the real block yields
//! partial-permutation patterns whose weighted sum reconstructs the
//! fractions exactly, and whose dummy rows and columns never schedule a
//! measurement.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::DMatrix;
use thiserror::Error;

use crate::bound::AssignmentMatrix;

#[derive(Debug, Error)]
pub enum BirkhoffError {
    #[error("no perfect matching on the positive support; residual mass {residual:.3e}")]
    DecompositionStalled { residual: f64 },
    #[error("{0}")]
    Invalid(String),
}

/// Square doubly-substochastic matrix of size `max(N, M)` with the
/// provenance of the padding: rows past `n_real_systems` and columns past
/// `n_real_sensors` are dummies.
#[derive(Debug, Clone)]
pub struct SubstochasticSquare {
    entries: DMatrix<f64>,
    n_real_systems: usize,
    n_real_sensors: usize,
}

impl SubstochasticSquare {
    pub fn new(
        entries: DMatrix<f64>,
        n_real_systems: usize,
        n_real_sensors: usize,
    ) -> Result<Self, BirkhoffError> {
        let d = entries.nrows();
        if entries.ncols() != d {
            return Err(BirkhoffError::Invalid(format!(
                "square matrix required, got {}x{}",
                entries.nrows(),
                entries.ncols()
            )));
        }
        if n_real_systems.max(n_real_sensors) != d {
            return Err(BirkhoffError::Invalid(format!(
                "size {d} must equal max(N = {n_real_systems}, M = {n_real_sensors})"
            )));
        }
        let tol = 1e-9;
        for e in entries.iter() {
            if !(*e >= -tol && *e <= 1.0 + tol) {
                return Err(BirkhoffError::Invalid(format!("entry {e} outside [0, 1]")));
            }
        }
        for k in 0..d {
            let r: f64 = entries.row(k).iter().sum();
            let c: f64 = entries.column(k).iter().sum();
            if r > 1.0 + tol || c > 1.0 + tol {
                return Err(BirkhoffError::Invalid(format!(
                    "line {k} exceeds unit sum (row {r}, column {c})"
                )));
            }
        }
        Ok(Self { entries, n_real_systems, n_real_sensors })
    }

    pub fn size(&self) -> usize {
        self.entries.nrows()
    }

    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn n_real_systems(&self) -> usize {
        self.n_real_systems
    }

    pub fn n_real_sensors(&self) -> usize {
        self.n_real_sensors
    }
}

/// Zero-pads an `N x M` assignment to `max(N, M)` square, keeping the
/// real/dummy provenance.
pub fn pad_square(p: &AssignmentMatrix) -> SubstochasticSquare {
    let n = p.matrix().nrows();
    let m = p.matrix().ncols();
    let d = n.max(m);
    let mut sq = DMatrix::<f64>::zeros(d, d);
    sq.view_mut((0, 0), (n, m)).copy_from(p.matrix());
    SubstochasticSquare { entries: sq, n_real_systems: n, n_real_sensors: m }
}

/// Doubly stochastic extension
/// `[[P, I - D_r], [I - D_c, P^T]]` of twice the size, where `D_r`, `D_c`
/// hold the row and column sums. Every row and column sums to 1.
pub fn extend_doubly_stochastic(sq: &SubstochasticSquare) -> DMatrix<f64> {
    let d = sq.size();
    let p = &sq.entries;
    let mut hat = DMatrix::<f64>::zeros(2 * d, 2 * d);
    hat.view_mut((0, 0), (d, d)).copy_from(p);
    hat.view_mut((d, d), (d, d)).copy_from(&p.transpose());
    for k in 0..d {
        let r: f64 = p.row(k).iter().sum();
        let c: f64 = p.column(k).iter().sum();
        hat[(k, d + k)] = 1.0 - r;
        hat[(d + k, k)] = 1.0 - c;
    }
    hat
}

/// One pattern of the switching cycle: sensor `j` watches system `i`
/// exactly where `pattern[(i, j)] = 1`, for a fraction `phi` of the
/// cycle. The all-zero pattern encodes idle capacity.
#[derive(Debug, Clone)]
pub struct ScheduleAtom {
    pub phi: f64,
    pub pattern: DMatrix<f64>,
}

/// Deterministic maximum bipartite matching by augmenting paths; rows and
/// candidate columns are explored in ascending order.
fn perfect_matching(support: &[Vec<bool>]) -> Option<Vec<usize>> {
    let d = support.len();
    let mut col_owner: Vec<Option<usize>> = vec![None; d];

    fn augment(
        r: usize,
        support: &[Vec<bool>],
        col_owner: &mut [Option<usize>],
        visited: &mut [bool],
    ) -> bool {
        for c in 0..support.len() {
            if support[r][c] && !visited[c] {
                visited[c] = true;
                if col_owner[c].is_none()
                    || augment(col_owner[c].unwrap(), support, col_owner, visited)
                {
                    col_owner[c] = Some(r);
                    return true;
                }
            }
        }
        false
    }

    for r in 0..d {
        let mut visited = vec![false; d];
        if !augment(r, support, &mut col_owner, &mut visited) {
            return None;
        }
    }
    let mut row_to_col = vec![0; d];
    for (c, owner) in col_owner.iter().enumerate() {
        row_to_col[owner.expect("perfect matching")] = c;
    }
    Some(row_to_col)
}

/// Greedy peeling decomposition: extend to the doubly stochastic matrix,
/// repeatedly extract a perfect matching on the positive support, remove
/// the minimal matched mass, and truncate each permutation to the real
/// block. Duplicate truncations merge; an all-zero pattern (idle time)
/// is kept so the weights always sum to 1. The atom count obeys
/// `K <= (2*size - 1)^2 + 1`.
pub fn birkhoff_decompose(
    sq: &SubstochasticSquare,
    tol: f64,
) -> Result<Vec<ScheduleAtom>, BirkhoffError> {
    let d = sq.size();
    let two = 2 * d;
    let mut hat = extend_doubly_stochastic(sq);
    let n = sq.n_real_systems;
    let m = sq.n_real_sensors;

    let mut atoms: Vec<ScheduleAtom> = Vec::new();
    let mut peeled = 0.0_f64;
    let cap = (two - 1) * (two - 1) + 1;
    for _ in 0..cap {
        if 1.0 - peeled <= tol {
            break;
        }
        let support: Vec<Vec<bool>> =
            (0..two).map(|r| (0..two).map(|c| hat[(r, c)] > tol).collect()).collect();
        let Some(matching) = perfect_matching(&support) else {
            break; // entries left are below tol: sub-threshold residue
        };
        // subtracting the minimum zeroes that entry exactly; no clamping,
        // so no mass is ever lost
        let phi = matching
            .iter()
            .enumerate()
            .map(|(r, &c)| hat[(r, c)])
            .fold(f64::INFINITY, f64::min);
        let mut pattern = DMatrix::<f64>::zeros(n, m);
        for (r, &c) in matching.iter().enumerate() {
            hat[(r, c)] -= phi;
            if r < n && c < m {
                pattern[(r, c)] = 1.0;
            }
        }
        if let Some(existing) = atoms
            .iter_mut()
            .find(|a| a.pattern.iter().zip(pattern.iter()).all(|(x, y)| (x - y).abs() < 0.5))
        {
            existing.phi += phi;
        } else {
            atoms.push(ScheduleAtom { phi, pattern });
        }
        peeled += phi;
    }
    let residual = 1.0 - peeled;
    if residual > 16.0 * tol.max(f64::EPSILON) * two as f64 {
        return Err(BirkhoffError::DecompositionStalled { residual });
    }
    // absorb the peeling round-off so the weights sum to exactly 1
    let total: f64 = atoms.iter().map(|a| a.phi).sum();
    for a in atoms.iter_mut() {
        a.phi /= total;
    }
    atoms.retain(|a| a.phi > 0.0);
    Ok(atoms)
}

/// Periodic switching schedule: atoms ordered by descending weight,
/// executed in order within every cycle of length `epsilon`.
#[derive(Debug, Clone)]
pub struct SwitchingSchedule {
    pub atoms: Vec<ScheduleAtom>,
    pub epsilon: f64,
    /// Start time of each atom within a cycle: `ε (φ_1 + … + φ_{k-1})`.
    pub switch_times: Vec<f64>,
}

/// Lays the atoms out over one cycle, largest weight first.
pub fn build_schedule(
    mut atoms: Vec<ScheduleAtom>,
    epsilon: f64,
) -> Result<SwitchingSchedule, BirkhoffError> {
    if !(epsilon > 0.0) {
        return Err(BirkhoffError::Invalid(format!(
            "cycle length must be positive, got {epsilon}"
        )));
    }
    if atoms.is_empty() {
        return Err(BirkhoffError::Invalid(String::from("schedule needs at least one atom")));
    }
    let total: f64 = atoms.iter().map(|a| a.phi).sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(BirkhoffError::Invalid(format!("atom weights sum to {total}, expected 1")));
    }
    atoms.sort_by(|a, b| b.phi.partial_cmp(&a.phi).expect("finite weights"));
    let mut switch_times = Vec::with_capacity(atoms.len());
    let mut acc = 0.0;
    for a in &atoms {
        switch_times.push(epsilon * acc);
        acc += a.phi;
    }
    Ok(SwitchingSchedule { atoms, epsilon, switch_times })
}

impl SwitchingSchedule {
    /// Sensor watching system `i` during atom `k`, if any.
    pub fn sensor_for_system(&self, k: usize, i: usize) -> Option<usize> {
        let pattern = &self.atoms[k].pattern;
        (0..pattern.ncols()).find(|&j| pattern[(i, j)] > 0.5)
    }

    /// Time window `[start, end)` of atom `k` within a cycle.
    pub fn segment(&self, k: usize) -> (f64, f64) {
        let start = self.switch_times[k];
        let end = if k + 1 < self.switch_times.len() {
            self.switch_times[k + 1]
        } else {
            self.epsilon
        };
        (start, end)
    }

    /// Fractions of the cycle each (system, sensor) pair is active:
    /// `Σ_k φ_k P_k`.
    pub fn realized_fractions(&self) -> DMatrix<f64> {
        let mut f = DMatrix::<f64>::zeros(
            self.atoms[0].pattern.nrows(),
            self.atoms[0].pattern.ncols(),
        );
        for a in &self.atoms {
            f += &a.pattern * a.phi;
        }
        f
    }
}
