//! Problem description: system dynamics, sensor links, resource-constraint
//! modes, validation of the standing assumptions, and composite
//! information matrices.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use nalgebra::DMatrix;
use thiserror::Error;

use crate::linalg;

/// Structural errors raised while assembling a problem.
#[derive(Debug, Error)]
pub enum ModelError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("system {system}, sensor {sensor}: {detail}")]
    BadLink { system: usize, sensor: usize, detail: String },
    #[error("system {system}: {detail}")]
    BadSystem { system: usize, detail: String },
    #[error("{0}")]
    Invalid(String),
}

/// Resource-constraint flavor for one row (system) or column (sensor) of
/// the assignment: `AtMostOne` caps the sum at 1, `ExactlyOne` pins it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConstraintMode {
    AtMostOne,
    ExactlyOne,
}

/// One linear time-invariant plant: drift `A`, process-noise power
/// spectral density `W`, initial covariance `Sigma0`, and the error
/// weight `T` appearing in the objective.
#[derive(Debug, Clone)]
pub struct SystemModel {
    pub a: DMatrix<f64>,
    pub w: DMatrix<f64>,
    pub sigma0: DMatrix<f64>,
    pub t_weight: DMatrix<f64>,
}

impl SystemModel {
    pub fn new(
        a: DMatrix<f64>,
        w: DMatrix<f64>,
        sigma0: DMatrix<f64>,
        t_weight: DMatrix<f64>,
    ) -> Result<Self, ModelError> {
        let n = a.nrows();
        if a.ncols() != n {
            return Err(ModelError::DimensionMismatch(format!(
                "A must be square, got {}x{}",
                a.nrows(),
                a.ncols()
            )));
        }
        for (name, m) in [("W", &w), ("Sigma0", &sigma0), ("T", &t_weight)] {
            if m.nrows() != n || m.ncols() != n {
                return Err(ModelError::DimensionMismatch(format!(
                    "{name} must be {n}x{n}, got {}x{}",
                    m.nrows(),
                    m.ncols()
                )));
            }
        }
        Ok(Self { a, w, sigma0, t_weight })
    }

    pub fn state_dim(&self) -> usize {
        self.a.nrows()
    }

    /// Symmetric PSD square root of the process noise density.
    pub fn w_sqrt(&self) -> DMatrix<f64> {
        linalg::sym_sqrt(&self.w)
    }
}

/// Observation channel between one sensor and one system: `y = C x + v`
/// with measurement-noise density `V` and per-time observation cost κ.
///
/// Absent physical links are encoded as `C = 0`, `V = I`, `κ = 0`; they
/// produce no information.
#[derive(Debug, Clone)]
pub struct SensorLink {
    pub c: DMatrix<f64>,
    pub v: DMatrix<f64>,
    pub kappa: f64,
}

impl SensorLink {
    pub fn new(c: DMatrix<f64>, v: DMatrix<f64>, kappa: f64) -> Result<Self, ModelError> {
        if v.nrows() != v.ncols() || v.nrows() != c.nrows() {
            return Err(ModelError::DimensionMismatch(format!(
                "V must be square matching C's row count: C is {}x{}, V is {}x{}",
                c.nrows(),
                c.ncols(),
                v.nrows(),
                v.ncols()
            )));
        }
        if !(kappa >= 0.0) {
            return Err(ModelError::Invalid(format!(
                "negative observation cost kappa = {kappa}"
            )));
        }
        Ok(Self { c, v, kappa })
    }
}

/// The full scheduling instance: `N` systems, an `N x M` grid of sensor
/// links, and per-sensor / per-system constraint modes.
///
/// Immutable after construction; per-link information matrices
/// `C^T V^{-1} C` are precomputed once.
#[derive(Debug, Clone)]
pub struct SchedulingProblem {
    systems: Vec<SystemModel>,
    links: Vec<Vec<SensorLink>>,
    sensor_modes: Vec<ConstraintMode>,
    system_modes: Vec<ConstraintMode>,
    info: Vec<Vec<DMatrix<f64>>>,
}

impl SchedulingProblem {
    pub fn new(
        systems: Vec<SystemModel>,
        links: Vec<Vec<SensorLink>>,
        sensor_modes: Vec<ConstraintMode>,
        system_modes: Vec<ConstraintMode>,
    ) -> Result<Self, ModelError> {
        let n = systems.len();
        if n == 0 {
            return Err(ModelError::Invalid(String::from("no systems")));
        }
        if links.len() != n {
            return Err(ModelError::DimensionMismatch(format!(
                "links grid has {} rows for {} systems",
                links.len(),
                n
            )));
        }
        let m = links[0].len();
        if m == 0 {
            return Err(ModelError::Invalid(String::from("no sensors")));
        }
        if system_modes.len() != n || sensor_modes.len() != m {
            return Err(ModelError::DimensionMismatch(format!(
                "mode vectors must have lengths {n} (systems) and {m} (sensors), got {} and {}",
                system_modes.len(),
                sensor_modes.len()
            )));
        }

        let mut info = Vec::with_capacity(n);
        for (i, row) in links.iter().enumerate() {
            if row.len() != m {
                return Err(ModelError::DimensionMismatch(format!(
                    "links row {i} has {} entries, expected {m}",
                    row.len()
                )));
            }
            let ni = systems[i].state_dim();
            let mut info_row = Vec::with_capacity(m);
            for (j, link) in row.iter().enumerate() {
                if link.c.ncols() != ni {
                    return Err(ModelError::BadLink {
                        system: i,
                        sensor: j,
                        detail: format!(
                            "C has {} columns but system state dimension is {ni}",
                            link.c.ncols()
                        ),
                    });
                }
                let chol = nalgebra::Cholesky::new(linalg::symmetrize(&link.v)).ok_or_else(
                    || ModelError::BadLink {
                        system: i,
                        sensor: j,
                        detail: String::from("V is not positive definite"),
                    },
                )?;
                let vinv_c = chol.solve(&link.c);
                info_row.push(linalg::symmetrize(&(link.c.transpose() * vinv_c)));
            }
            info.push(info_row);
        }

        Ok(Self { systems, links, sensor_modes, system_modes, info })
    }

    pub fn n_systems(&self) -> usize {
        self.systems.len()
    }

    pub fn n_sensors(&self) -> usize {
        self.links[0].len()
    }

    pub fn system(&self, i: usize) -> &SystemModel {
        &self.systems[i]
    }

    pub fn systems(&self) -> &[SystemModel] {
        &self.systems
    }

    pub fn link(&self, i: usize, j: usize) -> &SensorLink {
        &self.links[i][j]
    }

    /// Precomputed `C_ij^T V_ij^{-1} C_ij`.
    pub fn link_information(&self, i: usize, j: usize) -> &DMatrix<f64> {
        &self.info[i][j]
    }

    pub fn kappa(&self, i: usize, j: usize) -> f64 {
        self.links[i][j].kappa
    }

    pub fn sensor_mode(&self, j: usize) -> ConstraintMode {
        self.sensor_modes[j]
    }

    pub fn system_mode(&self, i: usize) -> ConstraintMode {
        self.system_modes[i]
    }

    pub fn sensor_modes(&self) -> &[ConstraintMode] {
        &self.sensor_modes
    }

    pub fn system_modes(&self) -> &[ConstraintMode] {
        &self.system_modes
    }

    /// True when each system sees the same `(C, V, kappa)` through every
    /// sensor, making sensors interchangeable.
    pub fn identical_sensors(&self) -> bool {
        for row in &self.links {
            let first = &row[0];
            for link in &row[1..] {
                let same_c = link.c.shape() == first.c.shape()
                    && linalg::amax(&(&link.c - &first.c))
                        <= 1e-12 * (1.0 + linalg::amax(&first.c));
                let same_v = link.v.shape() == first.v.shape()
                    && linalg::amax(&(&link.v - &first.v))
                        <= 1e-12 * (1.0 + linalg::amax(&first.v));
                let same_k = (link.kappa - first.kappa).abs() <= 1e-12 * (1.0 + first.kappa);
                if !(same_c && same_v && same_k) {
                    return false;
                }
            }
        }
        true
    }

    /// All sensors identical per system and every system scalar: the
    /// setting where Whittle indices have closed form. Returns the
    /// per-system `(C, V, kappa)` when the structure holds.
    pub fn scalar_identical_sensors(&self) -> Option<Vec<(f64, f64, f64)>> {
        let mut out = Vec::with_capacity(self.n_systems());
        for i in 0..self.n_systems() {
            if self.systems[i].state_dim() != 1 {
                return None;
            }
            let first = &self.links[i][0];
            if first.c.nrows() != 1 {
                return None;
            }
            let (c, v, k) = (first.c[(0, 0)], first.v[(0, 0)], first.kappa);
            for link in &self.links[i][1..] {
                if link.c.nrows() != 1
                    || (link.c[(0, 0)] - c).abs() > 1e-12 * (1.0 + c.abs())
                    || (link.v[(0, 0)] - v).abs() > 1e-12 * (1.0 + v.abs())
                    || (link.kappa - k).abs() > 1e-12 * (1.0 + k.abs())
                {
                    return None;
                }
            }
            out.push((c, v, k));
        }
        Some(out)
    }
}

/// One named pass/fail check from [`validate_problem`].
#[derive(Debug, Clone)]
pub struct Finding {
    pub subject: String,
    pub passed: bool,
    pub detail: String,
}

/// Outcome of validating the standing assumptions.
#[derive(Debug, Clone)]
pub struct ValidationReport {
    pub findings: Vec<Finding>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.findings.iter().all(|f| f.passed)
    }
}

fn finding(subject: String, passed: bool, detail: String) -> Finding {
    Finding { subject, passed, detail }
}

/// Checks, per system: definiteness of `W`, `Sigma0`, `T` and `V`;
/// detectability of `(A_i, stacked V_ij^{-1/2} C_ij)`; controllability of
/// `(A_i, W_i^{1/2})`. Deterministic and side-effect free.
pub fn validate_problem(p: &SchedulingProblem) -> ValidationReport {
    let mut findings = Vec::new();
    for i in 0..p.n_systems() {
        let sys = p.system(i);
        findings.push(finding(
            format!("system {i}: W positive semidefinite"),
            linalg::is_psd(&sys.w),
            format!("eigenvalues {:?}", linalg::symmetric_eigenvalues(&sys.w)),
        ));
        let sigma0_pd = linalg::is_pd(&sys.sigma0);
        findings.push(finding(
            format!("system {i}: Sigma0 positive definite"),
            sigma0_pd,
            if sigma0_pd {
                String::from("ok")
            } else {
                String::from(
                    "not strictly positive definite; add a small multiple of the identity",
                )
            },
        ));
        findings.push(finding(
            format!("system {i}: T positive semidefinite"),
            linalg::is_psd(&sys.t_weight),
            format!("eigenvalues {:?}", linalg::symmetric_eigenvalues(&sys.t_weight)),
        ));
        for j in 0..p.n_sensors() {
            findings.push(finding(
                format!("system {i}, sensor {j}: V positive definite"),
                linalg::is_pd(&p.link(i, j).v),
                String::from("measurement noise density must be invertible"),
            ));
        }

        // modal test against the combined information of all sensors
        let all = alloc::vec![1.0; p.n_sensors()];
        let detect = composite_information(p, i, &all)
            .map_err(|e| format!("{e}"))
            .and_then(|s| linalg::pbh_detectable(&sys.a, &s).map_err(|e| e));
        findings.push(match detect {
            Ok(ok) => finding(
                format!("system {i}: detectable from some sensor subset"),
                ok,
                String::from("PBH test on (A, combined C'V^-1C)"),
            ),
            Err(e) => finding(format!("system {i}: detectability"), false, e),
        });

        let ctrl = linalg::pbh_controllable(&sys.a, &sys.w_sqrt());
        findings.push(match ctrl {
            Ok(ok) => finding(
                format!("system {i}: (A, W^1/2) controllable"),
                ok,
                String::from("PBH test"),
            ),
            Err(e) => finding(format!("system {i}: controllability"), false, e),
        });
    }
    ValidationReport { findings }
}

/// `sum_j weights[j] · C_ij^T V_ij^{-1} C_ij`, the instantaneous
/// information seen by system `i` under fractional sensor attention.
pub fn composite_information(
    p: &SchedulingProblem,
    i: usize,
    weights: &[f64],
) -> Result<DMatrix<f64>, ModelError> {
    if weights.len() != p.n_sensors() {
        return Err(ModelError::DimensionMismatch(format!(
            "{} weights for {} sensors",
            weights.len(),
            p.n_sensors()
        )));
    }
    let n = p.system(i).state_dim();
    let mut s = DMatrix::<f64>::zeros(n, n);
    for (j, &wj) in weights.iter().enumerate() {
        if wj != 0.0 {
            s += p.link_information(i, j) * wj;
        }
    }
    Ok(linalg::symmetrize(&s))
}

/// PBH detectability of system `i` under the composite information for
/// the given weights: no eigenvector of `A_i` with `Re λ >= 0` may lie in
/// the kernel of the information matrix.
pub fn detectability_with_weights(
    p: &SchedulingProblem,
    i: usize,
    weights: &[f64],
) -> Result<bool, ModelError> {
    let s = composite_information(p, i, weights)?;
    linalg::pbh_detectable(&p.system(i).a, &s).map_err(ModelError::Invalid)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dmatrix;

    fn scalar_problem(a: f64, c: f64, v: f64, w: f64) -> SchedulingProblem {
        let sys = SystemModel::new(
            dmatrix![a],
            dmatrix![w],
            dmatrix![1.0],
            dmatrix![1.0],
        )
        .unwrap();
        let link = SensorLink::new(dmatrix![c], dmatrix![v], 0.0).unwrap();
        SchedulingProblem::new(
            alloc::vec![sys],
            alloc::vec![alloc::vec![link]],
            alloc::vec![ConstraintMode::AtMostOne],
            alloc::vec![ConstraintMode::AtMostOne],
        )
        .unwrap()
    }

    #[test]
    fn validates_well_posed_scalar_system() {
        let p = scalar_problem(2.0, 1.0, 1.0, 1.0);
        let report = validate_problem(&p);
        assert!(report.passed(), "{:?}", report.findings);
    }

    #[test]
    fn flags_undetectable_unstable_system() {
        let p = scalar_problem(1.0, 0.0, 1.0, 1.0);
        let report = validate_problem(&p);
        assert!(!report.passed());
        assert!(report
            .findings
            .iter()
            .any(|f| !f.passed && f.subject.contains("detectable")));
    }

    #[test]
    fn flags_uncontrollable_noise() {
        let p = scalar_problem(0.0, 1.0, 1.0, 0.0);
        let report = validate_problem(&p);
        assert!(report
            .findings
            .iter()
            .any(|f| !f.passed && f.subject.contains("controllable")));
    }

    #[test]
    fn composite_information_sums_links() {
        // two sensors C = {1, 2}, V = {1, 4}: 0.5*1 + 0.5*(4/4) = 1
        let sys =
            SystemModel::new(dmatrix![0.0], dmatrix![1.0], dmatrix![1.0], dmatrix![1.0]).unwrap();
        let l1 = SensorLink::new(dmatrix![1.0], dmatrix![1.0], 0.0).unwrap();
        let l2 = SensorLink::new(dmatrix![2.0], dmatrix![4.0], 0.0).unwrap();
        let p = SchedulingProblem::new(
            alloc::vec![sys],
            alloc::vec![alloc::vec![l1, l2]],
            alloc::vec![ConstraintMode::AtMostOne; 2],
            alloc::vec![ConstraintMode::AtMostOne],
        )
        .unwrap();
        let s = composite_information(&p, 0, &[0.5, 0.5]).unwrap();
        assert!((s[(0, 0)] - 1.0).abs() < 1e-12);
        assert!(composite_information(&p, 0, &[0.0, 0.0]).unwrap()[(0, 0)].abs() == 0.0);
    }

    #[test]
    fn detectability_by_weights() {
        let p = scalar_problem(2.0, 1.0, 1.0, 1.0);
        assert!(!detectability_with_weights(&p, 0, &[0.0]).unwrap());
        assert!(detectability_with_weights(&p, 0, &[0.23]).unwrap());
        let stable = scalar_problem(-1.0, 0.0, 1.0, 1.0);
        assert!(detectability_with_weights(&stable, 0, &[0.0]).unwrap());
    }

    #[test]
    fn negative_kappa_rejected() {
        assert!(SensorLink::new(dmatrix![1.0], dmatrix![1.0], -0.1).is_err());
    }

    #[test]
    fn dimension_mismatch_names_pair() {
        let sys =
            SystemModel::new(dmatrix![0.0], dmatrix![1.0], dmatrix![1.0], dmatrix![1.0]).unwrap();
        let bad = SensorLink::new(dmatrix![1.0, 2.0], dmatrix![1.0], 0.0).unwrap();
        let err = SchedulingProblem::new(
            alloc::vec![sys],
            alloc::vec![alloc::vec![bad]],
            alloc::vec![ConstraintMode::AtMostOne],
            alloc::vec![ConstraintMode::AtMostOne],
        )
        .unwrap_err();
        let msg = alloc::format!("{err}");
        assert!(msg.contains("system 0, sensor 0"), "{msg}");
    }
}
