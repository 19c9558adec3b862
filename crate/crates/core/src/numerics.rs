//! Fixed-step explicit integration, micro-step composition, finite-difference
//! linearization and integrator stability analysis.

use nalgebra::{Complex, DMatrix, SMatrix};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{lateral_accel, CurvState, ModelContext, RateInput, VehicleModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum IntegratorKind {
    #[serde(alias = "explicit-euler")]
    Euler,
    Rk4,
}

impl std::str::FromStr for IntegratorKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "euler" | "explicit-euler" => Ok(Self::Euler),
            "rk4" => Ok(Self::Rk4),
            other => Err(Error::Config(format!("unknown integrator `{other}`"))),
        }
    }
}

impl std::fmt::Display for IntegratorKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Euler => "euler",
            Self::Rk4 => "rk4",
        })
    }
}

fn check_finite<const N: usize>(dx: [f64; N], x: &[f64; N]) -> Result<[f64; N]> {
    if dx.iter().all(|v| v.is_finite()) {
        Ok(dx)
    } else {
        Err(Error::Integration(x.to_vec()))
    }
}

#[inline]
fn axpy<const N: usize>(x: &[f64; N], a: f64, d: &[f64; N]) -> [f64; N] {
    let mut out = *x;
    for i in 0..N {
        out[i] += a * d[i];
    }
    out
}

/// One explicit step of `x' = f(x)`; inputs are captured by `f` and thus
/// held constant over the step.
pub fn step<const N: usize, F>(
    f: &F,
    x: &[f64; N],
    h: f64,
    kind: IntegratorKind,
) -> Result<[f64; N]>
where
    F: Fn(&[f64; N]) -> Result<[f64; N]>,
{
    let k1 = check_finite(f(x)?, x)?;
    match kind {
        IntegratorKind::Euler => Ok(axpy(x, h, &k1)),
        IntegratorKind::Rk4 => {
            let x2 = axpy(x, 0.5 * h, &k1);
            let k2 = check_finite(f(&x2)?, &x2)?;
            let x3 = axpy(x, 0.5 * h, &k2);
            let k3 = check_finite(f(&x3)?, &x3)?;
            let x4 = axpy(x, h, &k3);
            let k4 = check_finite(f(&x4)?, &x4)?;
            let mut out = *x;
            for i in 0..N {
                out[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            }
            Ok(out)
        }
    }
}

/// Number of micro steps `dt / h`; rejects non-integer ratios.
pub fn micro_step_count(dt: f64, h: f64) -> Result<usize> {
    if !(dt > 0.0 && h > 0.0) {
        return Err(Error::Config(format!(
            "dt = {dt} and h = {h} must be positive"
        )));
    }
    let ratio = dt / h;
    let n = ratio.round();
    if n < 1.0 || (ratio - n).abs() > 1e-9 * ratio {
        return Err(Error::Config(format!(
            "dt / h = {dt} / {h} = {ratio} is not a positive integer"
        )));
    }
    Ok(n as usize)
}

/// `dt / h` chained steps of size `h`.
pub fn micro_step<const N: usize, F>(
    f: &F,
    x: &[f64; N],
    dt: f64,
    h: f64,
    kind: IntegratorKind,
) -> Result<[f64; N]>
where
    F: Fn(&[f64; N]) -> Result<[f64; N]>,
{
    let n = micro_step_count(dt, h)?;
    let mut out = *x;
    for _ in 0..n {
        out = step(f, &out, h, kind)?;
    }
    Ok(out)
}

fn fd_step(v: f64) -> f64 {
    (1e-6 * v.abs()).max(1e-6)
}

/// Central-difference Jacobians `(df/dx, df/du)` at `(x0, u0)`.
pub fn linearize<const N: usize, const M: usize, F>(
    f: &F,
    x0: &[f64; N],
    u0: &[f64; M],
) -> Result<(SMatrix<f64, N, N>, SMatrix<f64, N, M>)>
where
    F: Fn(&[f64; N], &[f64; M]) -> Result<[f64; N]>,
{
    let mut a = SMatrix::<f64, N, N>::zeros();
    let mut b = SMatrix::<f64, N, M>::zeros();
    for j in 0..N {
        let e = fd_step(x0[j]);
        let (mut xp, mut xm) = (*x0, *x0);
        xp[j] += e;
        xm[j] -= e;
        let (fp, fm) = (f(&xp, u0)?, f(&xm, u0)?);
        for i in 0..N {
            a[(i, j)] = (fp[i] - fm[i]) / (2.0 * e);
        }
    }
    for j in 0..M {
        let e = fd_step(u0[j]);
        let (mut up, mut um) = (*u0, *u0);
        up[j] += e;
        um[j] -= e;
        let (fp, fm) = (f(x0, &up)?, f(x0, &um)?);
        for i in 0..N {
            b[(i, j)] = (fp[i] - fm[i]) / (2.0 * e);
        }
    }
    if a.iter().chain(b.iter()).any(|v| !v.is_finite()) {
        return Err(Error::Linearization);
    }
    Ok((a, b))
}

/// Amplification factor `R(z)` of one step on `x' = lambda x`, `z = lambda h`.
pub fn amplification(kind: IntegratorKind, z: Complex<f64>) -> Complex<f64> {
    let one = Complex::new(1.0, 0.0);
    match kind {
        IntegratorKind::Euler => one + z,
        IntegratorKind::Rk4 => {
            let z2 = z * z;
            let z3 = z2 * z;
            let z4 = z3 * z;
            one + z + z2 / 2.0 + z3 / 6.0 + z4 / 24.0
        }
    }
}

pub fn stability_region_contains(kind: IntegratorKind, z: Complex<f64>) -> bool {
    amplification(kind, z).norm() <= 1.0
}

/// Eigenvalues of a square matrix; closed form for 2x2.
pub fn eigenvalues(m: &DMatrix<f64>) -> Vec<Complex<f64>> {
    if m.nrows() == 2 && m.ncols() == 2 {
        let tr = m[(0, 0)] + m[(1, 1)];
        let det = m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)];
        let disc = 0.25 * tr * tr - det;
        let half = 0.5 * tr;
        if disc >= 0.0 {
            let sq = disc.sqrt();
            vec![Complex::new(half - sq, 0.0), Complex::new(half + sq, 0.0)]
        } else {
            let sq = (-disc).sqrt();
            vec![Complex::new(half, -sq), Complex::new(half, sq)]
        }
    } else {
        m.complex_eigenvalues().iter().copied().collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeedVerdict {
    pub speed: f64,
    /// Eigenvalues as `[re, im]` in 1/s; empty when indeterminate.
    pub eigenvalues: Vec<[f64; 2]>,
    pub stable: bool,
    /// `max |R(lambda h)| - 1`.
    pub margin: f64,
    pub indeterminate: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub model: String,
    pub method: IntegratorKind,
    pub h: f64,
    pub speeds: Vec<SpeedVerdict>,
    /// Smallest grid speed from which every faster grid speed is stable.
    pub min_stable_speed: Option<f64>,
}

/// Straight-running equilibrium at `vx` with `D` chosen so `vx_dot = 0`.
pub fn straight_equilibrium(model: &VehicleModel, vx: f64) -> Result<CurvState> {
    let ctx = ModelContext::default();
    let u = RateInput::default();
    let p = &model.params;
    let mut x = CurvState {
        vx,
        d: (p.drag(vx) + p.rolling(vx)) / p.m,
        ..Default::default()
    };
    for _ in 0..20 {
        let f0 = model.derivative(&x, &u, 0.0, &ctx)?.vx;
        if f0.abs() < 1e-12 {
            return Ok(x);
        }
        let e = 1e-6;
        let mut xp = x;
        xp.d += e;
        let slope = (model.derivative(&xp, &u, 0.0, &ctx)?.vx - f0) / e;
        if slope.abs() < 1e-9 {
            break;
        }
        x.d -= f0 / slope;
    }
    let res = model.derivative(&x, &u, 0.0, &ctx)?.vx;
    if res.abs() < 1e-9 {
        Ok(x)
    } else {
        Err(Error::Validation(format!(
            "no straight equilibrium at vx = {vx}"
        )))
    }
}

/// Jacobian of `(vy_dot, r_dot)` w.r.t. `(vy, r)` with `vx` frozen.
pub fn lateral_jacobian(model: &VehicleModel, x0: &CurvState) -> Result<DMatrix<f64>> {
    let ctx = ModelContext::default();
    let u = RateInput::default();
    let f = |z: &[f64; 2], _u: &[f64; 0]| -> Result<[f64; 2]> {
        let mut x = *x0;
        x.vy = z[0];
        x.r = z[1];
        let dx = model.derivative(&x, &u, 0.0, &ctx)?;
        Ok([dx.vy, dx.r])
    };
    let (a, _) = linearize(&f, &[x0.vy, x0.r], &[])?;
    Ok(DMatrix::from_column_slice(2, 2, a.as_slice()))
}

fn verdict(model: &VehicleModel, vx: f64, h: f64, kind: IntegratorKind) -> SpeedVerdict {
    let lin = straight_equilibrium(model, vx).and_then(|x0| lateral_jacobian(model, &x0));
    match lin {
        Ok(a) => {
            let eig = eigenvalues(&a);
            let margin = eig
                .iter()
                .map(|l| amplification(kind, l * h).norm() - 1.0)
                .fold(f64::NEG_INFINITY, f64::max);
            SpeedVerdict {
                speed: vx,
                eigenvalues: eig.iter().map(|c| [c.re, c.im]).collect(),
                stable: margin <= 1e-10,
                margin,
                indeterminate: false,
            }
        }
        Err(_) => SpeedVerdict {
            speed: vx,
            eigenvalues: Vec::new(),
            stable: false,
            margin: f64::NAN,
            indeterminate: true,
        },
    }
}

/// Stability of the lateral subsystem over a speed grid for one
/// integrator and step size. The dynamic model is analysed without blending.
pub fn model_stability_scan(
    model: &VehicleModel,
    h: f64,
    kind: IntegratorKind,
    speeds: &[f64],
) -> StabilityReport {
    let dynamic = model.clone().unblended();
    let mut grid = speeds.to_vec();
    grid.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let verdicts: Vec<SpeedVerdict> = grid
        .par_iter()
        .map(|&v| verdict(&dynamic, v, h, kind))
        .collect();
    let mut min_stable = None;
    for v in verdicts.iter().rev() {
        if v.stable {
            min_stable = Some(v.speed);
        } else {
            break;
        }
    }
    StabilityReport {
        model: model.kind.to_string(),
        method: kind,
        h,
        speeds: verdicts,
        min_stable_speed: min_stable,
    }
}

/// Direct nonlinear simulation from a perturbed straight equilibrium.
/// Returns the largest ratio of the `(vy, r)` deviation norm to its
/// initial value over `duration`.
pub fn perturbed_growth(
    model: &VehicleModel,
    vx: f64,
    h: f64,
    kind: IntegratorKind,
    perturbation: f64,
    duration: f64,
) -> Result<f64> {
    let dynamic = model.clone().unblended();
    let x0 = straight_equilibrium(&dynamic, vx)?;
    let mut x = x0;
    x.vy += perturbation;
    x.r += perturbation;
    let norm0 = perturbation * 2f64.sqrt();
    let u = RateInput::default();
    let mut ctx = ModelContext::default();
    let steps = (duration / h).round() as usize;
    let mut worst: f64 = 1.0;
    for _ in 0..steps {
        let c = ctx;
        let f = |z: &[f64; 8]| -> Result<[f64; 8]> {
            Ok(dynamic
                .derivative(&CurvState::from_array(z), &u, 0.0, &c)?
                .to_array())
        };
        let next = match step(&f, &x.to_array(), h, kind) {
            Ok(n) => n,
            Err(_) => return Ok(f64::INFINITY),
        };
        let xs = CurvState::from_array(&next);
        if let Ok(dx) = dynamic.derivative(&xs, &u, 0.0, &ctx) {
            ctx.ay = lateral_accel(&xs, &dx);
            ctx.m0_diff = dynamic.m_diff(&xs, &ctx);
        }
        x = xs;
        let norm = (x.vy - x0.vy).hypot(x.r - x0.r);
        if !norm.is_finite() {
            return Ok(f64::INFINITY);
        }
        worst = worst.max(norm / norm0);
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn decay(x: &[f64; 1]) -> Result<[f64; 1]> {
        Ok([-x[0]])
    }

    #[test]
    fn one_step_of_exponential_decay() {
        let e = step(&decay, &[1.0], 0.1, IntegratorKind::Euler).unwrap();
        assert!((e[0] - 0.9).abs() < 1e-15);
        let r = step(&decay, &[1.0], 0.1, IntegratorKind::Rk4).unwrap();
        assert!((r[0] - 0.9048375).abs() < 1e-7);
        let zero = |_: &[f64; 3]| -> Result<[f64; 3]> { Ok([0.0; 3]) };
        assert_eq!(
            step(&zero, &[1.0, 2.0, 3.0], 0.5, IntegratorKind::Rk4).unwrap(),
            [1.0, 2.0, 3.0]
        );
    }

    #[test]
    fn non_finite_derivative_is_reported() {
        let bad = |_: &[f64; 1]| -> Result<[f64; 1]> { Ok([f64::NAN]) };
        assert!(matches!(
            step(&bad, &[1.0], 0.1, IntegratorKind::Euler),
            Err(Error::Integration(_))
        ));
    }

    #[test]
    fn micro_step_ratio_validation() {
        assert_eq!(micro_step_count(0.04, 0.008).unwrap(), 5);
        assert_eq!(micro_step_count(0.04, 0.04).unwrap(), 1);
        assert!(matches!(
            micro_step_count(0.04, 0.007),
            Err(Error::Config(_))
        ));
        assert!(micro_step_count(0.04, 0.05).is_err());
    }

    #[test]
    fn micro_step_equals_chained_steps() {
        let f = |x: &[f64; 2]| -> Result<[f64; 2]> { Ok([x[1], -4.0 * x[0] - 0.3 * x[1].powi(3)]) };
        let x0 = [0.7, -0.2];
        let m = micro_step(&f, &x0, 0.04, 0.008, IntegratorKind::Rk4).unwrap();
        let mut c = x0;
        for _ in 0..5 {
            c = step(&f, &c, 0.008, IntegratorKind::Rk4).unwrap();
        }
        assert_eq!(m, c);
        assert_eq!(
            micro_step(&f, &x0, 0.01, 0.01, IntegratorKind::Euler).unwrap(),
            step(&f, &x0, 0.01, IntegratorKind::Euler).unwrap()
        );
    }

    #[test]
    fn linearize_recovers_linear_map() {
        let a = [[1.5, -2.0], [0.25, 3.0]];
        let f = |x: &[f64; 2], u: &[f64; 1]| -> Result<[f64; 2]> {
            Ok([
                a[0][0] * x[0] + a[0][1] * x[1] + u[0],
                a[1][0] * x[0] + a[1][1] * x[1] - 2.0 * u[0],
            ])
        };
        let (ja, jb) = linearize(&f, &[3.0, -1.0], &[0.5]).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                assert!((ja[(i, j)] - a[i][j]).abs() <= 1e-6 * a[i][j].abs());
            }
        }
        assert!((jb[(0, 0)] - 1.0).abs() < 1e-6 && (jb[(1, 0)] + 2.0).abs() < 1e-6);
    }

    #[test]
    fn stability_region_points() {
        let c = |re: f64| Complex::new(re, 0.0);
        assert!(stability_region_contains(IntegratorKind::Euler, c(-1.0)));
        assert!(!stability_region_contains(IntegratorKind::Euler, c(-2.01)));
        assert!(stability_region_contains(IntegratorKind::Rk4, c(-2.6)));
        assert!(!stability_region_contains(IntegratorKind::Rk4, c(-2.9)));
    }

    #[test]
    fn eigenvalues_closed_form_matches_general() {
        let m = DMatrix::from_row_slice(2, 2, &[-3.0, 2.0, -5.0, -1.0]);
        let mut a = eigenvalues(&m);
        let mut b: Vec<Complex<f64>> = m.complex_eigenvalues().iter().copied().collect();
        let key = |c: &Complex<f64>| (c.re, c.im);
        a.sort_by(|x, y| key(x).partial_cmp(&key(y)).unwrap());
        b.sort_by(|x, y| key(x).partial_cmp(&key(y)).unwrap());
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).norm() < 1e-10);
        }
    }
}
