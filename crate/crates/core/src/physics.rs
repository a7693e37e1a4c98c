//! Desk-scale solid-state kernels: tight-binding bands, chain phonons,
//! Drude conduction and p-n junction depletion.

use std::f64::consts::PI;
use std::fmt::Write as _;
use thiserror::Error;

/// Elementary charge, C.
pub const ELEMENTARY_CHARGE: f64 = 1.602176634e-19;
/// Electron rest mass, kg.
pub const ELECTRON_MASS: f64 = 9.1093837015e-31;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PhysicsError {
    #[error("{0} must be strictly positive")]
    NonPositive(&'static str),
    #[error("k = {k} outside the first Brillouin zone [-{limit}, {limit}]")]
    OutsideZone { k: f64, limit: f64 },
    #[error("applied bias {v_applied} V outside the depletion regime |V| < {v_bi} V")]
    Regime { v_applied: f64, v_bi: f64 },
    #[error("need at least {min} grid points, got {got}")]
    GridTooSmall { min: usize, got: usize },
    #[error("no convergence after {0} iterations")]
    NoConvergence(usize),
}

fn positive(v: f64, name: &'static str) -> Result<(), PhysicsError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(PhysicsError::NonPositive(name))
    }
}

fn check_zone(a: f64, ks: &[f64]) -> Result<(), PhysicsError> {
    let limit = PI / a;
    match ks.iter().find(|k| k.abs() > limit * (1.0 + 1e-12)) {
        Some(&k) => Err(PhysicsError::OutsideZone { k, limit }),
        None => Ok(()),
    }
}

/// `n` evenly spaced wavevectors spanning the zone `[-pi/a, pi/a]`.
pub fn zone_samples(a: f64, n: usize) -> Vec<f64> {
    let limit = PI / a;
    match n {
        0 => Vec::new(),
        1 => vec![0.0],
        _ => (0..n)
            .map(|i| -limit + 2.0 * limit * i as f64 / (n - 1) as f64)
            .collect(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BandCurve {
    pub eps0: f64,
    pub t: f64,
    pub a: f64,
    pub k: Vec<f64>,
    pub energy: Vec<f64>,
}

impl BandCurve {
    pub fn to_csv(&self) -> String {
        csv("k_per_m,E_eV", self.k.iter().zip(&self.energy).map(|(k, e)| vec![*k, *e]))
    }
}

/// One-band tight-binding dispersion `E(k) = eps0 - 2 t cos(k a)`; energies
/// in the units of `eps0` and `t`.
pub fn band_energies(eps0: f64, t: f64, a: f64, ks: &[f64]) -> Result<BandCurve, PhysicsError> {
    positive(t, "hopping t")?;
    positive(a, "lattice constant a")?;
    check_zone(a, ks)?;
    Ok(BandCurve {
        eps0,
        t,
        a,
        k: ks.to_vec(),
        energy: ks.iter().map(|k| eps0 - 2.0 * t * (k * a).cos()).collect(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhononCurve {
    pub spring: f64,
    pub mass: f64,
    pub a: f64,
    pub k: Vec<f64>,
    pub omega: Vec<f64>,
}

impl PhononCurve {
    pub fn to_csv(&self) -> String {
        csv("k_per_m,omega_rad_per_s", self.k.iter().zip(&self.omega).map(|(k, w)| vec![*k, *w]))
    }
}

/// Monatomic chain: `omega(k) = 2 sqrt(K/M) |sin(k a / 2)|`.
pub fn phonon_dispersion(spring: f64, mass: f64, a: f64, ks: &[f64]) -> Result<PhononCurve, PhysicsError> {
    positive(spring, "spring constant K")?;
    positive(mass, "ion mass M")?;
    positive(a, "lattice constant a")?;
    check_zone(a, ks)?;
    let w0 = 2.0 * (spring / mass).sqrt();
    Ok(PhononCurve {
        spring,
        mass,
        a,
        k: ks.to_vec(),
        omega: ks.iter().map(|k| w0 * (k * a / 2.0).sin().abs()).collect(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DrudeParams {
    /// Carrier density, m^-3.
    pub n: f64,
    /// Collision time, s.
    pub tau: f64,
    /// Effective mass, kg.
    pub mass: f64,
}

/// `sigma = n e^2 tau / m`, in S/m.
pub fn drude_conductivity(p: &DrudeParams) -> Result<f64, PhysicsError> {
    positive(p.n, "carrier density n")?;
    positive(p.tau, "collision time tau")?;
    positive(p.mass, "mass m")?;
    Ok(p.n * ELEMENTARY_CHARGE * ELEMENTARY_CHARGE * p.tau / p.mass)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JunctionParams {
    /// Acceptor density, m^-3.
    pub na: f64,
    /// Donor density, m^-3.
    pub nd: f64,
    /// Permittivity, F/m.
    pub eps_s: f64,
    /// Built-in potential, V.
    pub v_bi: f64,
    pub v_applied: f64,
}

impl JunctionParams {
    pub fn validate(&self) -> Result<(), PhysicsError> {
        positive(self.na, "N_a")?;
        positive(self.nd, "N_d")?;
        positive(self.eps_s, "permittivity")?;
        positive(self.v_bi, "built-in potential")?;
        if self.v_applied.abs() >= self.v_bi || !self.v_applied.is_finite() {
            return Err(PhysicsError::Regime {
                v_applied: self.v_applied,
                v_bi: self.v_bi,
            });
        }
        Ok(())
    }

    fn drop(&self) -> f64 {
        self.v_bi - self.v_applied
    }
}

/// Depletion width and its split, in metres.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Depletion {
    pub w: f64,
    pub x_n: f64,
    pub x_p: f64,
}

/// Abrupt-junction closed form.
pub fn depletion_width(j: &JunctionParams) -> Result<Depletion, PhysicsError> {
    j.validate()?;
    let w = (2.0 * j.eps_s * j.drop() / ELEMENTARY_CHARGE * (j.na + j.nd) / (j.na * j.nd)).sqrt();
    Ok(Depletion {
        w,
        x_n: w * j.na / (j.na + j.nd),
        x_p: w * j.nd / (j.na + j.nd),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct PoissonProfile {
    /// Node positions, m; the junction sits at 0.
    pub x: Vec<f64>,
    /// Potential, V, zero at the p-side edge.
    pub potential: Vec<f64>,
    /// Charge density, C/m^3.
    pub charge: Vec<f64>,
    pub depletion: Depletion,
    pub iterations: usize,
}

impl PoissonProfile {
    pub fn to_csv(&self) -> String {
        csv(
            "x_m,V_volts,rho_C_per_m3",
            (0..self.x.len()).map(|i| vec![self.x[i], self.potential[i], self.charge[i]]),
        )
    }
}

pub const MIN_GRID_POINTS: usize = 64;
const MAX_BISECTIONS: usize = 200;

/// Finite-difference Poisson solve under full depletion. The p-side edge
/// `x_p` is found by bisection on the condition that the one-sided field at
/// that edge vanishes, with `x_n` from charge neutrality.
pub fn poisson_depletion_profile(j: &JunctionParams, grid_points: usize) -> Result<PoissonProfile, PhysicsError> {
    j.validate()?;
    if grid_points < MIN_GRID_POINTS {
        return Err(PhysicsError::GridTooSmall {
            min: MIN_GRID_POINTS,
            got: grid_points,
        });
    }
    let edge_field = |x_p: f64| {
        let (_, v, _, h) = solve_fixed(j, x_p, grid_points);
        -(v[1] - v[0]) / h
    };
    // Field is negative when the region is too narrow to hold the drop.
    let mut lo = 1e-12;
    let mut hi = 1e-9;
    let mut iterations = 0;
    while edge_field(hi) < 0.0 {
        hi *= 2.0;
        iterations += 1;
        if iterations > MAX_BISECTIONS {
            return Err(PhysicsError::NoConvergence(iterations));
        }
    }
    while (hi - lo) > 1e-13 * hi {
        let mid = 0.5 * (lo + hi);
        if edge_field(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        iterations += 1;
        if iterations > MAX_BISECTIONS {
            return Err(PhysicsError::NoConvergence(iterations));
        }
    }
    let x_p = 0.5 * (lo + hi);
    let (x, potential, charge, _) = solve_fixed(j, x_p, grid_points);
    let x_n = x_p * j.na / j.nd;
    Ok(PoissonProfile {
        x,
        potential,
        charge,
        depletion: Depletion {
            w: x_p + x_n,
            x_n,
            x_p,
        },
        iterations,
    })
}

/// Dirichlet solve on `[-x_p, x_n]` with `V = 0` at the left and the full
/// drop at the right.
fn solve_fixed(j: &JunctionParams, x_p: f64, n: usize) -> (Vec<f64>, Vec<f64>, Vec<f64>, f64) {
    let x_n = x_p * j.na / j.nd;
    let h = (x_p + x_n) / (n - 1) as f64;
    let x: Vec<f64> = (0..n).map(|i| -x_p + h * i as f64).collect();
    // Each node carries the hat-weighted average of the piecewise-constant
    // charge, so the step at the junction lands where it physically is
    // rather than on the nearest node.
    let charge: Vec<f64> = x
        .iter()
        .map(|&xi| {
            let s = xi / h;
            let n_side = if s >= 1.0 {
                1.0
            } else if s <= -1.0 {
                0.0
            } else if s >= 0.0 {
                1.0 - 0.5 * (1.0 - s) * (1.0 - s)
            } else {
                0.5 * (1.0 + s) * (1.0 + s)
            };
            ELEMENTARY_CHARGE * (n_side * j.nd - (1.0 - n_side) * j.na)
        })
        .collect();
    // Interior equations: V[i-1] - 2 V[i] + V[i+1] = -h^2 rho[i] / eps.
    let m = n - 2;
    let mut rhs: Vec<f64> = (1..n - 1).map(|i| -h * h * charge[i] / j.eps_s).collect();
    rhs[m - 1] -= j.drop();
    let mut v = vec![0.0; n];
    v[n - 1] = j.drop();
    let sol = thomas(m, &rhs);
    v[1..n - 1].copy_from_slice(&sol);
    (x, v, charge, h)
}

/// Solves the constant-coefficient system `x[i-1] - 2 x[i] + x[i+1] = d[i]`.
fn thomas(m: usize, d: &[f64]) -> Vec<f64> {
    let (a, b, c) = (1.0, -2.0, 1.0);
    let mut cp = vec![0.0; m];
    let mut dp = vec![0.0; m];
    cp[0] = c / b;
    dp[0] = d[0] / b;
    for i in 1..m {
        let den = b - a * cp[i - 1];
        cp[i] = c / den;
        dp[i] = (d[i] - a * dp[i - 1]) / den;
    }
    let mut x = vec![0.0; m];
    x[m - 1] = dp[m - 1];
    for i in (0..m - 1).rev() {
        x[i] = dp[i] - cp[i] * x[i + 1];
    }
    x
}

/// A CSV table with the given header row; numbers in exponent form.
pub fn csv(header: &str, rows: impl Iterator<Item = Vec<f64>>) -> String {
    let mut s = format!("{header}\n");
    for r in rows {
        let cells: Vec<String> = r.iter().map(|v| format!("{v:e}")).collect();
        writeln!(s, "{}", cells.join(",")).unwrap();
    }
    s
}
