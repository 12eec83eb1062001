//! Coefficient fields `a_jk(x)`, `V(x)` and the classical symbols built from them.
//!
//! Every field is a member of a small family of radial profiles
//! `phi(|x|^2)` composed with a constant shape matrix, so first and second
//! derivatives are available in closed form. Higher derivatives (for the decay
//! audit only) are taken by central differences.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};

/// Radial profile `phi(q)` with `q = |x|^2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Profile {
    /// `c <x>^{-exponent}`.
    Rational { coupling: f64, exponent: f64 },
    /// `c exp(-|x|^2 / (2 width^2))`.
    Gaussian { coupling: f64, width: f64 },
    /// `c exp(-(|x|^2 - radius^2)^2 / width^4)`, a bump concentrated on a sphere.
    Ring {
        coupling: f64,
        radius: f64,
        width: f64,
    },
}

impl Profile {
    /// Returns `(phi, phi', phi'')` as functions of `q`.
    #[inline]
    fn eval(&self, q: f64) -> (f64, f64, f64) {
        match *self {
            Profile::Rational { coupling, exponent } => {
                let s = 0.5 * exponent;
                let base = 1.0 + q;
                let f = coupling * base.powf(-s);
                (f, -s * f / base, s * (s + 1.0) * f / (base * base))
            }
            Profile::Gaussian { coupling, width } => {
                let w2 = width * width;
                let f = coupling * (-q / (2.0 * w2)).exp();
                (f, -f / (2.0 * w2), f / (4.0 * w2 * w2))
            }
            Profile::Ring {
                coupling,
                radius,
                width,
            } => {
                let w2 = width * width;
                let u = (q - radius * radius) / w2;
                let f = coupling * (-u * u).exp();
                (f, -2.0 * u / w2 * f, (4.0 * u * u - 2.0) / (w2 * w2) * f)
            }
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match *self {
            Profile::Rational { coupling, exponent } => coupling.is_finite() && exponent.is_finite(),
            Profile::Gaussian { coupling, width } => coupling.is_finite() && width > 0.0,
            Profile::Ring {
                coupling,
                radius,
                width,
            } => coupling.is_finite() && radius > 0.0 && width > 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Input(format!("invalid profile parameters {self:?}")))
        }
    }

    pub fn coupling(&self) -> f64 {
        match *self {
            Profile::Rational { coupling, .. }
            | Profile::Gaussian { coupling, .. }
            | Profile::Ring { coupling, .. } => coupling,
        }
    }

    pub fn with_coupling(self, c: f64) -> Self {
        match self {
            Profile::Rational { exponent, .. } => Profile::Rational {
                coupling: c,
                exponent,
            },
            Profile::Gaussian { width, .. } => Profile::Gaussian { coupling: c, width },
            Profile::Ring { radius, width, .. } => Profile::Ring {
                coupling: c,
                radius,
                width,
            },
        }
    }
}

/// The metric perturbation `a(x) - I`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case", deny_unknown_fields)]
pub enum MetricFamily {
    Flat,
    /// `a_jk = delta_jk (1 + phi)`.
    Isotropic { profile: Profile },
    /// `a_jk = delta_jk + (1 - delta_jk) phi`.
    OffDiagonal { profile: Profile },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case", deny_unknown_fields)]
pub enum PotentialFamily {
    None,
    Radial { profile: Profile },
}

/// Serializable description of a field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldSpec {
    pub dimension: usize,
    pub metric: MetricFamily,
    pub potential: PotentialFamily,
    pub decay_mu: f64,
    /// Oscillator frequencies; all ones when omitted.
    #[serde(default)]
    pub nu: Option<Vec<f64>>,
}

/// Perturbation data of `H = -1/2 d a d + 1/2 sum nu_j^2 x_j^2 + V`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "FieldSpec", into = "FieldSpec")]
pub struct CoefficientField {
    dim: usize,
    metric: MetricFamily,
    potential: PotentialFamily,
    decay_mu: f64,
    nu: Vec<f64>,
}

impl TryFrom<FieldSpec> for CoefficientField {
    type Error = Error;
    fn try_from(spec: FieldSpec) -> Result<Self> {
        let nu = spec.nu.unwrap_or_else(|| vec![1.0; spec.dimension]);
        CoefficientField::new(spec.dimension, spec.metric, spec.potential, spec.decay_mu, nu)
    }
}

impl From<CoefficientField> for FieldSpec {
    fn from(f: CoefficientField) -> Self {
        FieldSpec {
            dimension: f.dim,
            metric: f.metric,
            potential: f.potential,
            decay_mu: f.decay_mu,
            nu: Some(f.nu),
        }
    }
}

/// Highest derivative order available in closed form.
pub const ANALYTIC_DERIVATIVE_ORDER: usize = 2;

impl CoefficientField {
    pub fn new(
        dim: usize,
        metric: MetricFamily,
        potential: PotentialFamily,
        decay_mu: f64,
        nu: Vec<f64>,
    ) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Input("dimension must be positive".into()));
        }
        check_dim(dim, nu.len())?;
        if !(decay_mu > 1.0) || !decay_mu.is_finite() {
            return Err(Error::Input(format!("decay rate mu = {decay_mu} must exceed 1")));
        }
        if nu.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
            return Err(Error::Input("oscillator weights must be positive".into()));
        }
        match metric {
            MetricFamily::Flat => {}
            MetricFamily::Isotropic { profile } => profile.validate()?,
            MetricFamily::OffDiagonal { profile } => {
                profile.validate()?;
                if dim < 2 {
                    return Err(Error::Input("off-diagonal metric needs dimension >= 2".into()));
                }
            }
        }
        if let PotentialFamily::Radial { profile } = potential {
            profile.validate()?;
        }
        Ok(Self {
            dim,
            metric,
            potential,
            decay_mu,
            nu,
        })
    }

    /// `a = I`, `V = 0`, unit frequencies.
    pub fn flat(dim: usize) -> Self {
        Self::new(dim, MetricFamily::Flat, PotentialFamily::None, 2.0, vec![1.0; dim])
            .expect("flat field is valid")
    }

    /// `a = (1 + c <x>^{-mu}) I`, `V = 0`.
    pub fn rational_bump(dim: usize, coupling: f64, mu: f64) -> Result<Self> {
        Self::new(
            dim,
            MetricFamily::Isotropic {
                profile: Profile::Rational {
                    coupling,
                    exponent: mu,
                },
            },
            PotentialFamily::None,
            mu,
            vec![1.0; dim],
        )
    }

    /// `a = (1 + c exp(-|x|^2/(2w^2))) I`, `V = 0`.
    pub fn gaussian_bump(dim: usize, coupling: f64, width: f64) -> Result<Self> {
        Self::new(
            dim,
            MetricFamily::Isotropic {
                profile: Profile::Gaussian { coupling, width },
            },
            PotentialFamily::None,
            2.0,
            vec![1.0; dim],
        )
    }

    /// A two-dimensional metric bump concentrated on the circle `|x| = radius`.
    /// For large enough couplings it carries stable circular geodesics.
    pub fn ring(coupling: f64, radius: f64, width: f64) -> Result<Self> {
        Self::new(
            2,
            MetricFamily::Isotropic {
                profile: Profile::Ring {
                    coupling,
                    radius,
                    width,
                },
            },
            PotentialFamily::None,
            2.0,
            vec![1.0; 2],
        )
    }

    /// `a = I`, `V = c <x>^{2-mu}`.
    pub fn potential_only(dim: usize, coupling: f64, mu: f64) -> Result<Self> {
        Self::new(
            dim,
            MetricFamily::Flat,
            PotentialFamily::Radial {
                profile: Profile::Rational {
                    coupling,
                    exponent: mu - 2.0,
                },
            },
            mu,
            vec![1.0; dim],
        )
    }

    pub fn with_nu(mut self, nu: Vec<f64>) -> Result<Self> {
        check_dim(self.dim, nu.len())?;
        if nu.iter().any(|v| !(*v > 0.0)) {
            return Err(Error::Input("oscillator weights must be positive".into()));
        }
        self.nu = nu;
        Ok(self)
    }

    pub fn with_potential(mut self, potential: PotentialFamily) -> Result<Self> {
        if let PotentialFamily::Radial { profile } = potential {
            profile.validate()?;
        }
        self.potential = potential;
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn decay_mu(&self) -> f64 {
        self.decay_mu
    }

    pub fn nu(&self) -> &[f64] {
        &self.nu
    }

    pub fn metric_family(&self) -> MetricFamily {
        self.metric
    }

    pub fn potential_family(&self) -> PotentialFamily {
        self.potential
    }

    pub fn derivative_order(&self) -> usize {
        ANALYTIC_DERIVATIVE_ORDER
    }

    pub fn is_flat_metric(&self) -> bool {
        matches!(self.metric, MetricFamily::Flat)
    }

    pub fn is_flat(&self) -> bool {
        self.is_flat_metric() && matches!(self.potential, PotentialFamily::None)
    }

    pub fn has_unit_frequencies(&self) -> bool {
        self.nu.iter().all(|v| *v == 1.0)
    }

    fn metric_profile(&self) -> Option<(Profile, bool)> {
        match self.metric {
            MetricFamily::Flat => None,
            MetricFamily::Isotropic { profile } => Some((profile, true)),
            MetricFamily::OffDiagonal { profile } => Some((profile, false)),
        }
    }

    #[inline]
    fn shape(isotropic: bool, j: usize, k: usize) -> f64 {
        match (isotropic, j == k) {
            (true, true) | (false, false) => 1.0,
            _ => 0.0,
        }
    }

    /// `a(x)` as a row-major `n x n` matrix.
    pub fn metric(&self, x: &[f64]) -> Vec<f64> {
        let n = self.dim;
        let mut a = vec![0.0; n * n];
        for j in 0..n {
            a[j * n + j] = 1.0;
        }
        if let Some((profile, iso)) = self.metric_profile() {
            let (f, _, _) = profile.eval(sq(x));
            for j in 0..n {
                for k in 0..n {
                    a[j * n + k] += f * Self::shape(iso, j, k);
                }
            }
        }
        a
    }

    /// `a(x)` and `da[l][j][k] = d a_jk / d x_l` (flattened as `l*n*n + j*n + k`).
    pub fn metric_with_grad(&self, x: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let n = self.dim;
        let mut a = vec![0.0; n * n];
        let mut da = vec![0.0; n * n * n];
        for j in 0..n {
            a[j * n + j] = 1.0;
        }
        if let Some((profile, iso)) = self.metric_profile() {
            let (f, f1, _) = profile.eval(sq(x));
            for j in 0..n {
                for k in 0..n {
                    let s = Self::shape(iso, j, k);
                    if s == 0.0 {
                        continue;
                    }
                    a[j * n + k] += f * s;
                    for l in 0..n {
                        da[l * n * n + j * n + k] = 2.0 * x[l] * f1 * s;
                    }
                }
            }
        }
        (a, da)
    }

    /// Second derivatives `d2a[l][m][j][k]` of the metric.
    pub fn metric_hessian(&self, x: &[f64]) -> Vec<f64> {
        let n = self.dim;
        let mut h = vec![0.0; n * n * n * n];
        if let Some((profile, iso)) = self.metric_profile() {
            let (_, f1, f2) = profile.eval(sq(x));
            for l in 0..n {
                for m in 0..n {
                    let d = if l == m { 2.0 * f1 } else { 0.0 } + 4.0 * x[l] * x[m] * f2;
                    for j in 0..n {
                        for k in 0..n {
                            h[((l * n + m) * n + j) * n + k] = d * Self::shape(iso, j, k);
                        }
                    }
                }
            }
        }
        h
    }

    pub fn potential(&self, x: &[f64]) -> f64 {
        match self.potential {
            PotentialFamily::None => 0.0,
            PotentialFamily::Radial { profile } => profile.eval(sq(x)).0,
        }
    }

    /// `(V, grad V)`.
    pub fn potential_with_grad(&self, x: &[f64]) -> (f64, Vec<f64>) {
        match self.potential {
            PotentialFamily::None => (0.0, vec![0.0; self.dim]),
            PotentialFamily::Radial { profile } => {
                let (f, f1, _) = profile.eval(sq(x));
                (f, x.iter().map(|xl| 2.0 * xl * f1).collect())
            }
        }
    }

    pub fn potential_hessian(&self, x: &[f64]) -> Vec<f64> {
        let n = self.dim;
        let mut h = vec![0.0; n * n];
        if let PotentialFamily::Radial { profile } = self.potential {
            let (_, f1, f2) = profile.eval(sq(x));
            for l in 0..n {
                for m in 0..n {
                    h[l * n + m] = if l == m { 2.0 * f1 } else { 0.0 } + 4.0 * x[l] * x[m] * f2;
                }
            }
        }
        h
    }

    /// Kinetic energy `k = 1/2 a_jk xi_j xi_k` with its gradients.
    pub fn kinetic(&self, x: &[f64], xi: &[f64]) -> (f64, Vec<f64>, Vec<f64>) {
        let n = self.dim;
        let (a, da) = self.metric_with_grad(x);
        let mut k = 0.0;
        let mut gxi = vec![0.0; n];
        for j in 0..n {
            for l in 0..n {
                gxi[j] += a[j * n + l] * xi[l];
            }
            k += 0.5 * gxi[j] * xi[j];
        }
        let mut gx = vec![0.0; n];
        for (l, g) in gx.iter_mut().enumerate() {
            let mut s = 0.0;
            for j in 0..n {
                for m in 0..n {
                    s += da[l * n * n + j * n + m] * xi[j] * xi[m];
                }
            }
            *g = 0.5 * s;
        }
        (k, gx, gxi)
    }
}

#[inline]
fn sq(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum()
}

/// Value and phase-space gradient of a scalar symbol.
#[derive(Debug, Clone, PartialEq)]
pub struct SymbolGrad {
    pub value: f64,
    pub grad_x: Vec<f64>,
    pub grad_xi: Vec<f64>,
}

/// The four symbols `p`, `p0`, `k`, `k0` (or their scaled versions).
#[derive(Debug, Clone, PartialEq)]
pub struct SymbolValues {
    pub p: SymbolGrad,
    pub p0: SymbolGrad,
    pub k: SymbolGrad,
    pub k0: SymbolGrad,
}

/// Symbols of `H`, `H0`, the kinetic energy and the free Laplacian at `(x, xi)`.
pub fn eval_symbols(field: &CoefficientField, x: &[f64], xi: &[f64]) -> Result<SymbolValues> {
    symbols_impl(field, 1.0, x, xi)
}

/// Scaled symbols: harmonic and potential terms divided by `lambda^2`.
pub fn eval_scaled_symbols(
    field: &CoefficientField,
    lambda: f64,
    x: &[f64],
    xi: &[f64],
) -> Result<SymbolValues> {
    if !(lambda > 0.0) || !lambda.is_finite() {
        return Err(Error::Input(format!("lambda = {lambda} must be positive")));
    }
    symbols_impl(field, lambda, x, xi)
}

fn symbols_impl(
    field: &CoefficientField,
    lambda: f64,
    x: &[f64],
    xi: &[f64],
) -> Result<SymbolValues> {
    let n = field.dim();
    check_dim(n, x.len())?;
    check_dim(n, xi.len())?;
    let inv2 = 1.0 / (lambda * lambda);
    let (k, kgx, kgxi) = field.kinetic(x, xi);
    let (v, vg) = field.potential_with_grad(x);
    let nu = field.nu();

    let k0 = 0.5 * sq(xi);
    let harm: f64 = 0.5 * (0..n).map(|j| nu[j] * nu[j] * x[j] * x[j]).sum::<f64>();
    let harm_g: Vec<f64> = (0..n).map(|j| nu[j] * nu[j] * x[j]).collect();

    let p = SymbolGrad {
        value: k + (harm + v) * inv2,
        grad_x: (0..n).map(|j| kgx[j] + (harm_g[j] + vg[j]) * inv2).collect(),
        grad_xi: kgxi.clone(),
    };
    let p0 = SymbolGrad {
        value: k0 + harm * inv2,
        grad_x: harm_g.iter().map(|g| g * inv2).collect(),
        grad_xi: xi.to_vec(),
    };
    Ok(SymbolValues {
        p,
        p0,
        k: SymbolGrad {
            value: k,
            grad_x: kgx,
            grad_xi: kgxi,
        },
        k0: SymbolGrad {
            value: k0,
            grad_x: vec![0.0; n],
            grad_xi: xi.to_vec(),
        },
    })
}

/// Per-coordinate rotation `(cos, (lambda/nu) sin, -(nu/lambda) sin, cos)` of the
/// scaled harmonic flow at time `t`.
#[inline]
pub(crate) fn harmonic_block(nu: f64, lambda: f64, t: f64) -> (f64, f64, f64, f64) {
    let theta = nu * t / lambda;
    let (s, c) = theta.sin_cos();
    (c, lambda / nu * s, -nu / lambda * s, c)
}

/// The generator `l(t) = p o exp(t H_p0) - p0` of the scattering evolution
/// (or `l^lambda` when `lambda` is given).
pub fn eval_ell(
    field: &CoefficientField,
    t: f64,
    x: &[f64],
    xi: &[f64],
    lambda: Option<f64>,
) -> Result<SymbolGrad> {
    let n = field.dim();
    check_dim(n, x.len())?;
    check_dim(n, xi.len())?;
    let lam = lambda.unwrap_or(1.0);
    if !(lam > 0.0) {
        return Err(Error::Input(format!("lambda = {lam} must be positive")));
    }
    let nu = field.nu();
    let mut y = vec![0.0; n];
    let mut eta = vec![0.0; n];
    let mut blocks = Vec::with_capacity(n);
    for j in 0..n {
        let b = harmonic_block(nu[j], lam, t);
        y[j] = b.0 * x[j] + b.1 * xi[j];
        eta[j] = b.2 * x[j] + b.3 * xi[j];
        blocks.push(b);
    }
    let at = symbols_impl(field, lam, &y, &eta)?;
    let here = symbols_impl(field, lam, x, xi)?;
    let mut grad_x = vec![0.0; n];
    let mut grad_xi = vec![0.0; n];
    for j in 0..n {
        let (a11, a12, a21, a22) = blocks[j];
        grad_x[j] = a11 * at.p.grad_x[j] + a21 * at.p.grad_xi[j] - here.p0.grad_x[j];
        grad_xi[j] = a12 * at.p.grad_x[j] + a22 * at.p.grad_xi[j] - here.p0.grad_xi[j];
    }
    Ok(SymbolGrad {
        value: at.p.value - here.p0.value,
        grad_x,
        grad_xi,
    })
}

/// One fitted decay constant of the audit.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AuditEntry {
    /// `"a_jk"` (metric perturbation, worst over entries) or `"V"`.
    pub component: String,
    pub multi_index: Vec<usize>,
    /// Smallest `C` with `|d^alpha f| <= C <x>^{-w}` on the sample grid.
    pub constant: f64,
    /// The weight `w` the constant was fitted against.
    pub weight: f64,
    /// Ratio of the scaled supremum on the outer half of the grid to the one
    /// on the preceding quarter; growth signals slower decay than required.
    pub tail_ratio: f64,
    pub violation: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AssumptionAudit {
    pub radius: f64,
    pub entries: Vec<AuditEntry>,
    /// Smallest eigenvalue of `a(x)` over the sample grid.
    pub pd_margin: f64,
    pub violations: Vec<String>,
}

impl AssumptionAudit {
    pub fn constant(&self, component: &str, multi_index: &[usize]) -> Option<f64> {
        self.entries
            .iter()
            .find(|e| e.component == component && e.multi_index == multi_index)
            .map(|e| e.constant)
    }

    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

const AUDIT_TAIL_GROWTH: f64 = 1.5;

/// Audits the short-range decay conditions and positivity of `a` on a radial
/// sample grid of the given radius, for all multi-indices with `|alpha| <= orders`.
pub fn check_assumption_a(
    field: &CoefficientField,
    radius: f64,
    orders: usize,
) -> Result<AssumptionAudit> {
    if !(radius > 0.0) {
        return Err(Error::Input("audit radius must be positive".into()));
    }
    if orders > ANALYTIC_DERIVATIVE_ORDER + 2 {
        return Err(Error::Input(format!(
            "audit order {orders} exceeds {}",
            ANALYTIC_DERIVATIVE_ORDER + 2
        )));
    }
    let n = field.dim();
    let samples = audit_samples(n, radius);

    let mut pd_margin = f64::INFINITY;
    for x in &samples {
        let a = DMatrix::from_row_slice(n, n, &field.metric(x));
        let ev = SymmetricEigen::new(a).eigenvalues.min();
        if ev <= 0.0 {
            return Err(Error::NotPositiveDefinite {
                witness: x.clone(),
                min_eigenvalue: ev,
            });
        }
        pd_margin = pd_margin.min(ev);
    }

    let mu = field.decay_mu();
    let mut entries = Vec::new();
    for order in 0..=orders {
        for alpha in multi_indices(n, order) {
            let dirs = directions(&alpha);
            let weight_a = mu + order as f64;
            let weight_v = mu - 2.0 + order as f64;
            let metric_vals: Vec<f64> = samples
                .iter()
                .map(|x| {
                    let d = derivative(x, &dirs, &|y: &[f64], o| metric_part(field, y, o));
                    d.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
                })
                .collect();
            let pot_vals: Vec<f64> = samples
                .iter()
                .map(|x| derivative(x, &dirs, &|y: &[f64], o| potential_part(field, y, o))[0].abs())
                .collect();
            for (component, vals, weight) in [("a_jk", metric_vals, weight_a), ("V", pot_vals, weight_v)] {
                entries.push(fit_entry(component, &alpha, &samples, &vals, weight, radius));
            }
        }
    }
    let violations = entries
        .iter()
        .filter(|e| e.violation)
        .map(|e| {
            format!(
                "{} alpha={:?}: scaled sup grows by {:.2} toward the grid edge",
                e.component, e.multi_index, e.tail_ratio
            )
        })
        .collect();
    Ok(AssumptionAudit {
        radius,
        entries,
        pd_margin,
        violations,
    })
}

fn fit_entry(
    component: &str,
    alpha: &[usize],
    samples: &[Vec<f64>],
    vals: &[f64],
    weight: f64,
    radius: f64,
) -> AuditEntry {
    let mut constant = 0.0_f64;
    let mut inner = 0.0_f64;
    let mut outer = 0.0_f64;
    for (x, v) in samples.iter().zip(vals) {
        let r = sq(x).sqrt();
        let scaled = v * (1.0 + r * r).powf(0.5 * weight);
        constant = constant.max(scaled);
        if r >= 0.25 * radius && r < 0.5 * radius {
            inner = inner.max(scaled);
        } else if r >= 0.5 * radius {
            outer = outer.max(scaled);
        }
    }
    let tail_ratio = if inner > 0.0 { outer / inner } else if outer > 0.0 { f64::INFINITY } else { 1.0 };
    let violation = outer > 1e-12 && tail_ratio > AUDIT_TAIL_GROWTH;
    AuditEntry {
        component: component.to_string(),
        multi_index: alpha.to_vec(),
        constant,
        weight,
        tail_ratio,
        violation,
    }
}

fn audit_samples(n: usize, radius: f64) -> Vec<Vec<f64>> {
    const RADII: usize = 400;
    match n {
        1 => (0..=2 * RADII)
            .map(|i| vec![radius * (i as f64 / RADII as f64 - 1.0)])
            .collect(),
        2 => {
            let mut out = vec![vec![0.0, 0.0]];
            for i in 1..=RADII {
                let r = radius * i as f64 / RADII as f64;
                for k in 0..24 {
                    let th = 2.0 * std::f64::consts::PI * k as f64 / 24.0;
                    out.push(vec![r * th.cos(), r * th.sin()]);
                }
            }
            out
        }
        _ => {
            // Rays along coordinate axes and the main diagonal.
            let mut dirs: Vec<Vec<f64>> = (0..n)
                .map(|j| (0..n).map(|k| if j == k { 1.0 } else { 0.0 }).collect())
                .collect();
            dirs.push(vec![1.0 / (n as f64).sqrt(); n]);
            let mut out = vec![vec![0.0; n]];
            for i in 1..=RADII {
                let r = radius * i as f64 / RADII as f64;
                for d in &dirs {
                    out.push(d.iter().map(|v| v * r).collect());
                    out.push(d.iter().map(|v| -v * r).collect());
                }
            }
            out
        }
    }
}

fn multi_indices(n: usize, order: usize) -> Vec<Vec<usize>> {
    if n == 1 {
        return vec![vec![order]];
    }
    let mut out = Vec::new();
    for first in (0..=order).rev() {
        for mut rest in multi_indices(n - 1, order - first) {
            let mut v = vec![first];
            v.append(&mut rest);
            out.push(v);
        }
    }
    out
}

fn directions(alpha: &[usize]) -> Vec<usize> {
    alpha
        .iter()
        .enumerate()
        .flat_map(|(l, &c)| std::iter::repeat(l).take(c))
        .collect()
}

/// Derivative of order `o <= 2` of the metric perturbation along `dirs`
/// (entries of `a - I`, flattened).
fn metric_part(field: &CoefficientField, x: &[f64], dirs: &[usize]) -> Vec<f64> {
    let n = field.dim();
    match dirs.len() {
        0 => {
            let mut a = field.metric(x);
            for j in 0..n {
                a[j * n + j] -= 1.0;
            }
            a
        }
        1 => {
            let (_, da) = field.metric_with_grad(x);
            da[dirs[0] * n * n..(dirs[0] + 1) * n * n].to_vec()
        }
        _ => {
            let h = field.metric_hessian(x);
            let off = (dirs[0] * n + dirs[1]) * n * n;
            h[off..off + n * n].to_vec()
        }
    }
}

fn potential_part(field: &CoefficientField, x: &[f64], dirs: &[usize]) -> Vec<f64> {
    let n = field.dim();
    match dirs.len() {
        0 => vec![field.potential(x)],
        1 => vec![field.potential_with_grad(x).1[dirs[0]]],
        _ => vec![field.potential_hessian(x)[dirs[0] * n + dirs[1]]],
    }
}

/// Analytic up to second order, central differences with relative step
/// `1e-4 <x>` beyond.
fn derivative(x: &[f64], dirs: &[usize], analytic: &dyn Fn(&[f64], &[usize]) -> Vec<f64>) -> Vec<f64> {
    if dirs.len() <= ANALYTIC_DERIVATIVE_ORDER {
        return analytic(x, dirs);
    }
    let (l, rest) = dirs.split_last().expect("non-empty");
    let step = 1e-4 * (1.0 + sq(x)).sqrt();
    let mut xp = x.to_vec();
    let mut xm = x.to_vec();
    xp[*l] += step;
    xm[*l] -= step;
    let fp = derivative(&xp, rest, analytic);
    let fm = derivative(&xm, rest, analytic);
    fp.iter().zip(&fm).map(|(a, b)| (a - b) / (2.0 * step)).collect()
}

/// Diagonalizes a positive symmetric harmonic matrix `b` (row-major `n x n`).
/// Returns the frequencies `nu_j = sqrt(eig_j)` and the orthogonal matrix whose
/// columns are the corresponding eigenvectors.
pub fn diagonalize_harmonic(b: &[f64], n: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    check_dim(n * n, b.len())?;
    let m = DMatrix::from_row_slice(n, n, b);
    if (&m - m.transpose()).amax() > 1e-12 * m.amax().max(1.0) {
        return Err(Error::Input("harmonic matrix must be symmetric".into()));
    }
    let eig = SymmetricEigen::new(m);
    if eig.eigenvalues.iter().any(|v| *v <= 0.0) {
        return Err(Error::Input("harmonic matrix must be positive definite".into()));
    }
    let nu = eig.eigenvalues.iter().map(|v| v.sqrt()).collect();
    let mut q = Vec::with_capacity(n * n);
    for r in 0..n {
        for c in 0..n {
            q.push(eig.eigenvectors[(r, c)]);
        }
    }
    Ok((nu, q))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn bump1() -> CoefficientField {
        CoefficientField::rational_bump(1, 0.5, 2.0).unwrap()
    }

    #[test]
    fn flat_symbols() {
        let f = CoefficientField::flat(1);
        let s = eval_symbols(&f, &[0.0], &[1.0]).unwrap();
        assert_eq!((s.p.value, s.p0.value, s.k.value, s.k0.value), (0.5, 0.5, 0.5, 0.5));
        let s = eval_symbols(&f, &[1.0], &[0.0]).unwrap();
        assert_eq!(s.p.value, 0.5);
        assert_eq!(s.k.value, 0.0);
    }

    #[test]
    fn rational_bump_symbols() {
        // a(0) = 1 + 0.5 <0>^{-2} = 1.5, so k = p = 0.75.
        let s = eval_symbols(&bump1(), &[0.0], &[1.0]).unwrap();
        assert_abs_diff_eq!(s.k.value, 0.75, epsilon = 1e-15);
        assert_abs_diff_eq!(s.p.value, 0.75, epsilon = 1e-15);
    }

    #[test]
    fn scaled_symbols() {
        let f = CoefficientField::flat(1);
        let s = eval_scaled_symbols(&f, 2.0, &[2.0], &[0.0]).unwrap();
        assert_eq!(s.p.value, 0.5);
        assert!(eval_scaled_symbols(&f, 0.0, &[0.0], &[1.0]).is_err());
        let g = bump1().with_potential(PotentialFamily::Radial {
            profile: Profile::Rational { coupling: 0.3, exponent: 0.0 },
        });
        let g = g.unwrap();
        let a = eval_scaled_symbols(&g, 1.0, &[0.7], &[-0.2]).unwrap();
        let b = eval_symbols(&g, &[0.7], &[-0.2]).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let f = CoefficientField::flat(2);
        assert!(matches!(
            eval_symbols(&f, &[0.0], &[1.0, 0.0]),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn ell_special_values() {
        let f = CoefficientField::flat(1);
        for &(t, x, xi) in &[(0.3, 1.0, -2.0), (2.0, 0.0, 1.0)] {
            assert_abs_diff_eq!(eval_ell(&f, t, &[x], &[xi], None).unwrap().value, 0.0, epsilon = 1e-14);
        }
        let g = bump1();
        let (x, xi) = ([0.4], [1.3]);
        let s = eval_symbols(&g, &x, &xi).unwrap();
        assert_abs_diff_eq!(
            eval_ell(&g, 0.0, &x, &xi, None).unwrap().value,
            s.p.value - s.p0.value,
            epsilon = 1e-15
        );
        // At t = pi the harmonic flow is the antipode.
        let at_pi = eval_ell(&g, std::f64::consts::PI, &x, &xi, None).unwrap().value;
        let sm = eval_symbols(&g, &[-0.4], &[-1.3]).unwrap();
        assert_abs_diff_eq!(at_pi, sm.p.value - s.p0.value, epsilon = 1e-14);
    }

    #[test]
    fn audit_flat_and_bump() {
        let a = check_assumption_a(&CoefficientField::flat(1), 20.0, 2).unwrap();
        assert!(a.entries.iter().all(|e| e.constant == 0.0));
        assert_eq!(a.pd_margin, 1.0);
        let b = check_assumption_a(&bump1(), 50.0, 3).unwrap();
        assert_abs_diff_eq!(b.constant("a_jk", &[0]).unwrap(), 0.5, epsilon = 1e-12);
        assert!(b.passed(), "{:?}", b.violations);
    }

    #[test]
    fn audit_rejects_indefinite_metric() {
        let f = CoefficientField::rational_bump(1, -2.0, 2.0).unwrap();
        match check_assumption_a(&f, 10.0, 1) {
            Err(Error::NotPositiveDefinite { witness, .. }) => assert!(witness[0].abs() < 1.0),
            other => panic!("expected rejection, got {other:?}"),
        }
    }

    #[test]
    fn audit_flags_slow_decay() {
        // Declared mu = 3 but the metric only decays like <x>^{-1.5}.
        let f = CoefficientField::new(
            1,
            MetricFamily::Isotropic {
                profile: Profile::Rational { coupling: 0.5, exponent: 1.5 },
            },
            PotentialFamily::None,
            3.0,
            vec![1.0],
        )
        .unwrap();
        let a = check_assumption_a(&f, 100.0, 1).unwrap();
        assert!(!a.passed());
    }

    #[test]
    fn diagonalize() {
        let (nu, q) = diagonalize_harmonic(&[4.0, 0.0, 0.0, 1.0], 2).unwrap();
        let mut s = nu.clone();
        s.sort_by(f64::total_cmp);
        assert_abs_diff_eq!(s[0], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(s[1], 2.0, epsilon = 1e-12);
        assert_eq!(q.len(), 4);
        assert!(diagonalize_harmonic(&[1.0, 2.0, 2.0, 1.0], 2).is_err());
    }

    #[test]
    fn spec_round_trip() {
        let f = CoefficientField::ring(1.0, 2.0, 1.0).unwrap();
        let spec: FieldSpec = f.clone().into();
        assert_eq!(CoefficientField::try_from(spec).unwrap(), f);
    }
}
