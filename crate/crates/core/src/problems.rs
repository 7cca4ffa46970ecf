//! Convex ERM instances built from generalized linear models.
//!
//! A [`GlmProblem`] holds a feature matrix `x` (n × d), labels, and a link
//! function. The loss of example i is `f(Wᵀxᵢ, yᵢ)` with `W` a d × C weight
//! matrix flattened row-major into a [`ParamVector`] (index `j·C + c`); C is 1
//! for the binary logistic and squared links. Objectives are sums over
//! examples, not averages.
//!
//! Every per-example gradient is an outer product `xᵢ ⊗ rᵢ` of the feature row
//! with the link residual `rᵢ = ∂f/∂z`. Two consequences are used throughout:
//! gradients live in the row space of X, and clipping a gradient is the same as
//! clamping the residual (Huberizing the link).

use std::fmt;
use std::ops::{Deref, DerefMut};
use std::path::Path;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::numerics::{self, axpy, dot, gaussian_sample, norm, Matrix, RngStream};

/// Model weights (d·C entries, row-major d × C).
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ParamVector(pub Vec<f64>);

impl ParamVector {
    pub fn zeros(dim: usize) -> Self {
        Self(vec![0.0; dim])
    }

    pub fn new(w: Vec<f64>) -> Result<Self> {
        if !numerics::all_finite(&w) {
            return Err(Error::NonFinite("parameter vector"));
        }
        Ok(Self(w))
    }

    pub fn norm(&self) -> f64 {
        norm(&self.0)
    }

    pub fn distance(&self, other: &ParamVector) -> f64 {
        norm(&numerics::sub(&self.0, &other.0))
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl Deref for ParamVector {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl DerefMut for ParamVector {
    fn deref_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }
}

impl From<Vec<f64>> for ParamVector {
    fn from(w: Vec<f64>) -> Self {
        Self(w)
    }
}

/// Link function of the GLM.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Link {
    /// Binary logistic regression, labels in {0, 1}.
    Logistic,
    /// Multiclass softmax cross-entropy, labels are class indices.
    Softmax { classes: usize },
    /// Least squares `½(wᵀx − y)²`, real labels.
    Squared,
}

impl Link {
    /// Number of output columns C.
    pub fn outputs(&self) -> usize {
        match self {
            Link::Softmax { classes } => *classes,
            _ => 1,
        }
    }

    fn check_label(&self, y: f64) -> bool {
        match self {
            Link::Logistic => y == 0.0 || y == 1.0,
            Link::Softmax { classes } => y >= 0.0 && y.fract() == 0.0 && (y as usize) < *classes,
            Link::Squared => y.is_finite(),
        }
    }

    /// Loss value and residual ∂f/∂z at margins `z`.
    fn loss_and_residual(&self, z: &[f64], y: f64) -> (f64, Vec<f64>) {
        match self {
            Link::Logistic => {
                let z = z[0];
                // softplus(z) − y·z, stable for large |z|.
                let softplus = if z > 0.0 {
                    z + (-z).exp().ln_1p()
                } else {
                    z.exp().ln_1p()
                };
                (softplus - y * z, vec![sigmoid(z) - y])
            }
            Link::Softmax { .. } => {
                let zmax = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let exps: Vec<f64> = z.iter().map(|v| (v - zmax).exp()).collect();
                let total: f64 = exps.iter().sum();
                let label = y as usize;
                let loss = zmax + total.ln() - z[label];
                let mut r: Vec<f64> = exps.iter().map(|e| e / total).collect();
                r[label] -= 1.0;
                (loss, r)
            }
            Link::Squared => {
                let diff = z[0] - y;
                (0.5 * diff * diff, vec![diff])
            }
        }
    }
}

impl fmt::Display for Link {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Link::Logistic => write!(f, "logistic"),
            Link::Softmax { classes } => write!(f, "softmax({classes})"),
            Link::Squared => write!(f, "squared"),
        }
    }
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Per-example clipping threshold τ (may be +∞ to disable clipping).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClipSpec {
    tau: f64,
}

impl ClipSpec {
    pub fn new(tau: f64) -> Result<Self> {
        if !(tau > 0.0) {
            return Err(invalid(format!(
                "clipping threshold must be > 0, got {tau}"
            )));
        }
        Ok(Self { tau })
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    /// Factor `min(1, τ/‖g‖)` applied to a gradient of norm `g_norm`.
    pub fn factor(&self, g_norm: f64) -> f64 {
        if g_norm > self.tau {
            self.tau / g_norm
        } else {
            1.0
        }
    }
}

/// A GLM empirical risk instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlmProblem {
    x: Matrix,
    y: Vec<f64>,
    link: Link,
    lipschitz: f64,
    smooth_beta: f64,
    radius: f64,
}

impl GlmProblem {
    /// Builds a problem with explicitly supplied constants.
    ///
    /// `lipschitz` bounds every per-example gradient norm on the radius-B
    /// ball and `smooth_beta` bounds per-example smoothness. A small empirical
    /// spot-check of the Lipschitz bound runs here and logs a warning on
    /// violation; the constants are kept as given.
    pub fn new(
        x: Matrix,
        y: Vec<f64>,
        link: Link,
        lipschitz: f64,
        smooth_beta: f64,
        radius: f64,
    ) -> Result<Self> {
        if x.rows() != y.len() {
            return Err(Error::DimensionMismatch {
                expected: x.rows(),
                actual: y.len(),
            });
        }
        if let Some((i, bad)) = y.iter().enumerate().find(|(_, v)| !link.check_label(**v)) {
            return Err(Error::Dataset(format!(
                "label {bad} at row {i} invalid for {link} link"
            )));
        }
        if let Link::Softmax { classes } = link {
            if classes < 2 {
                return Err(invalid("softmax link needs at least two classes"));
            }
        }
        if !(radius > 0.0) || !radius.is_finite() {
            return Err(invalid(format!("domain radius must be > 0, got {radius}")));
        }
        if !(lipschitz >= 0.0) || !(smooth_beta >= 0.0) {
            return Err(invalid("Lipschitz and smoothness constants must be >= 0"));
        }
        let p = Self {
            x,
            y,
            link,
            lipschitz,
            smooth_beta,
            radius,
        };
        p.spot_check_lipschitz();
        Ok(p)
    }

    /// Builds a problem with L and β derived from the data and the radius.
    ///
    /// With `R = max‖xᵢ‖`: logistic L = R, β = R²/4; softmax L = √2·R,
    /// β = R²/2; squared L = (B·R + max|yᵢ|)·R, β = R².
    pub fn with_derived_constants(x: Matrix, y: Vec<f64>, link: Link, radius: f64) -> Result<Self> {
        let r = (0..x.rows()).map(|i| norm(x.row(i))).fold(0.0, f64::max);
        let (l, beta) = match link {
            Link::Logistic => (r, r * r / 4.0),
            Link::Softmax { .. } => (std::f64::consts::SQRT_2 * r, r * r / 2.0),
            Link::Squared => {
                let ymax = y.iter().map(|v| v.abs()).fold(0.0, f64::max);
                ((radius * r + ymax) * r, r * r)
            }
        };
        Self::new(x, y, link, l, beta, radius)
    }

    fn spot_check_lipschitz(&self) {
        if self.n() == 0 {
            return;
        }
        let stream = RngStream::new(0x5EED, 0xC4EC);
        let mut worst: f64 = 0.0;
        for k in 0..4u64 {
            let mut w = gaussian_sample(&stream.substream(k), self.dim(), 1.0).unwrap_or_default();
            let nw = norm(&w);
            if nw > 0.0 {
                numerics::scale(self.radius / nw, &mut w);
            }
            for i in 0..self.n().min(256) {
                worst = worst.max(self.example_gradient_norm(&w, i));
            }
        }
        if worst > self.lipschitz * (1.0 + 1e-9) {
            tracing::warn!(
                observed = worst,
                declared = self.lipschitz,
                "per-example gradient norm exceeds the declared Lipschitz constant"
            );
        }
    }

    pub fn n(&self) -> usize {
        self.x.rows()
    }

    /// Feature dimension d.
    pub fn features(&self) -> usize {
        self.x.cols()
    }

    pub fn outputs(&self) -> usize {
        self.link.outputs()
    }

    /// Parameter dimension d·C.
    pub fn dim(&self) -> usize {
        self.features() * self.outputs()
    }

    pub fn x(&self) -> &Matrix {
        &self.x
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn link(&self) -> Link {
        self.link
    }

    pub fn lipschitz(&self) -> f64 {
        self.lipschitz
    }

    pub fn smooth_beta(&self) -> f64 {
        self.smooth_beta
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    fn check_index(&self, i: usize) -> Result<()> {
        if i >= self.n() {
            return Err(Error::IndexOutOfRange {
                index: i,
                len: self.n(),
            });
        }
        Ok(())
    }

    fn check_dim(&self, w: &[f64]) -> Result<()> {
        if w.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                actual: w.len(),
            });
        }
        Ok(())
    }

    fn margins(&self, w: &[f64], i: usize) -> Vec<f64> {
        let c = self.outputs();
        let xi = self.x.row(i);
        if c == 1 {
            return vec![dot(xi, w)];
        }
        let mut z = vec![0.0; c];
        for (j, &xj) in xi.iter().enumerate() {
            if xj != 0.0 {
                axpy(xj, &w[j * c..(j + 1) * c], &mut z);
            }
        }
        z
    }

    /// Loss of example i and its link residual.
    pub(crate) fn loss_and_residual(&self, w: &[f64], i: usize) -> (f64, Vec<f64>) {
        let z = self.margins(w, i);
        self.link.loss_and_residual(&z, self.y[i])
    }

    pub(crate) fn row_norm(&self, i: usize) -> f64 {
        norm(self.x.row(i))
    }

    /// `out += scale · xᵢ ⊗ r`
    pub(crate) fn add_outer(&self, i: usize, r: &[f64], scale: f64, out: &mut [f64]) {
        let c = self.outputs();
        for (j, &xj) in self.x.row(i).iter().enumerate() {
            let a = scale * xj;
            if a != 0.0 {
                axpy(a, r, &mut out[j * c..(j + 1) * c]);
            }
        }
    }

    fn example_gradient_norm(&self, w: &[f64], i: usize) -> f64 {
        let (_, r) = self.loss_and_residual(w, i);
        self.row_norm(i) * norm(&r)
    }

    pub fn per_example_loss(&self, w: &ParamVector, i: usize) -> Result<f64> {
        self.check_dim(w)?;
        self.check_index(i)?;
        Ok(self.loss_and_residual(w, i).0)
    }

    /// ∇ℓᵢ(w).
    pub fn per_example_gradient(&self, w: &ParamVector, i: usize) -> Result<Vec<f64>> {
        self.check_dim(w)?;
        self.check_index(i)?;
        let (_, r) = self.loss_and_residual(w, i);
        let mut g = vec![0.0; self.dim()];
        self.add_outer(i, &r, 1.0, &mut g);
        Ok(g)
    }

    /// Σᵢ ℓᵢ(w).
    pub fn loss(&self, w: &ParamVector) -> Result<f64> {
        self.check_dim(w)?;
        Ok((0..self.n()).map(|i| self.loss_and_residual(w, i).0).sum())
    }

    /// Σᵢ ∇ℓᵢ(w).
    pub fn total_gradient(&self, w: &ParamVector) -> Result<Vec<f64>> {
        self.check_dim(w)?;
        let mut g = vec![0.0; self.dim()];
        for i in 0..self.n() {
            let (_, r) = self.loss_and_residual(w, i);
            self.add_outer(i, &r, 1.0, &mut g);
        }
        Ok(g)
    }

    /// Fraction of misclassified examples (classification links) or mean
    /// squared residual (squared link).
    pub fn error_rate(&self, w: &ParamVector) -> Result<f64> {
        self.check_dim(w)?;
        if self.n() == 0 {
            return Ok(0.0);
        }
        let mut err = 0.0;
        for i in 0..self.n() {
            let z = self.margins(w, i);
            err += match self.link {
                Link::Logistic => f64::from(u8::from((z[0] > 0.0) != (self.y[i] == 1.0))),
                Link::Softmax { .. } => {
                    let arg = z
                        .iter()
                        .enumerate()
                        .max_by(|a, b| a.1.total_cmp(b.1))
                        .map_or(0, |(k, _)| k);
                    f64::from(u8::from(arg != self.y[i] as usize))
                }
                Link::Squared => (z[0] - self.y[i]).powi(2),
            };
        }
        Ok(err / self.n() as f64)
    }

    /// Rows of `self` followed by rows of `other`; constants take the max.
    pub fn concat(&self, other: &GlmProblem) -> Result<GlmProblem> {
        if self.link != other.link {
            return Err(invalid("cannot concatenate problems with different links"));
        }
        if self.n() > 0 && other.n() > 0 && self.features() != other.features() {
            return Err(Error::DimensionMismatch {
                expected: self.features(),
                actual: other.features(),
            });
        }
        let mut y = self.y.clone();
        y.extend_from_slice(&other.y);
        Ok(GlmProblem {
            x: self.x.vstack(&other.x)?,
            y,
            link: self.link,
            lipschitz: self.lipschitz.max(other.lipschitz),
            smooth_beta: self.smooth_beta.max(other.smooth_beta),
            radius: self.radius,
        })
    }

    /// Problem restricted to the given rows; constants are kept.
    pub fn subset(&self, idx: &[usize]) -> Result<GlmProblem> {
        if let Some(&bad) = idx.iter().find(|&&i| i >= self.n()) {
            return Err(Error::IndexOutOfRange {
                index: bad,
                len: self.n(),
            });
        }
        Ok(GlmProblem {
            x: self.x.select_rows(idx),
            y: idx.iter().map(|&i| self.y[i]).collect(),
            link: self.link,
            lipschitz: self.lipschitz,
            smooth_beta: self.smooth_beta,
            radius: self.radius,
        })
    }

    /// Same data with a different domain radius.
    pub fn with_radius(&self, radius: f64) -> Result<GlmProblem> {
        Self::new(
            self.x.clone(),
            self.y.clone(),
            self.link,
            self.lipschitz,
            self.smooth_beta,
            radius,
        )
    }

    /// An empty problem with the same shape and constants.
    pub fn empty_like(&self) -> GlmProblem {
        GlmProblem {
            x: Matrix::zeros(0, self.features()),
            y: Vec::new(),
            link: self.link,
            lipschitz: self.lipschitz,
            smooth_beta: self.smooth_beta,
            radius: self.radius,
        }
    }
}

/// `L(w) + (λ/2)‖w − w_ref‖²` over a shared GLM dataset.
#[derive(Debug, Clone)]
pub struct RegularizedObjective {
    pub base: Arc<GlmProblem>,
    lambda: f64,
    w_ref: ParamVector,
}

impl RegularizedObjective {
    pub fn new(base: Arc<GlmProblem>, lambda: f64, w_ref: ParamVector) -> Result<Self> {
        if !(lambda >= 0.0) || !lambda.is_finite() {
            return Err(invalid(format!(
                "lambda must be finite and >= 0, got {lambda}"
            )));
        }
        if w_ref.len() != base.dim() {
            return Err(Error::DimensionMismatch {
                expected: base.dim(),
                actual: w_ref.len(),
            });
        }
        Ok(Self {
            base,
            lambda,
            w_ref,
        })
    }

    /// Unregularized objective (λ = 0, w_ref = 0).
    pub fn plain(base: Arc<GlmProblem>) -> Self {
        let dim = base.dim();
        Self {
            base,
            lambda: 0.0,
            w_ref: ParamVector::zeros(dim),
        }
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn w_ref(&self) -> &ParamVector {
        &self.w_ref
    }

    pub fn dim(&self) -> usize {
        self.base.dim()
    }

    /// Upper bound M ≤ nβ + λ on the smoothness of J.
    pub fn smoothness_bound(&self) -> f64 {
        self.base.n() as f64 * self.base.smooth_beta() + self.lambda
    }

    fn regularizer(&self, w: &[f64]) -> f64 {
        let d = numerics::sub(w, &self.w_ref);
        0.5 * self.lambda * dot(&d, &d)
    }

    /// J(w).
    pub fn value(&self, w: &ParamVector) -> Result<f64> {
        Ok(self.base.loss(w)? + self.regularizer(w))
    }

    /// ∇J(w) = Σᵢ ∇ℓᵢ(w) + λ(w − w_ref).
    pub fn gradient(&self, w: &ParamVector) -> Result<Vec<f64>> {
        let mut g = self.base.total_gradient(w)?;
        self.add_regularizer_gradient(w, &mut g);
        Ok(g)
    }

    pub(crate) fn add_regularizer_gradient(&self, w: &[f64], g: &mut [f64]) {
        if self.lambda != 0.0 {
            for ((gi, wi), ri) in g.iter_mut().zip(w).zip(self.w_ref.iter()) {
                *gi += self.lambda * (wi - ri);
            }
        }
    }

    pub(crate) fn regularizer_value(&self, w: &[f64]) -> f64 {
        self.regularizer(w)
    }
}

/// `g · min(1, τ/‖g‖)`; the zero vector maps to itself.
pub fn clip_gradient(g: &[f64], spec: ClipSpec) -> Vec<f64> {
    let f = spec.factor(norm(g));
    g.iter().map(|v| v * f).collect()
}

/// Euclidean projection onto the centered ball of radius `radius`.
pub fn project_to_ball(w: &ParamVector, radius: f64) -> Result<ParamVector> {
    if !(radius > 0.0) {
        return Err(invalid(format!("ball radius must be > 0, got {radius}")));
    }
    let mut out = w.clone();
    project_in_place(&mut out, radius);
    Ok(out)
}

pub(crate) fn project_in_place(w: &mut [f64], radius: f64) {
    let n = norm(w);
    if n > radius {
        numerics::scale(radius / n, w);
    }
}

/// Orthonormal basis (d × r) of the row space of X, r = rank at `tol`.
pub fn row_space_basis(p: &GlmProblem, tol: f64) -> Result<Matrix> {
    if !(tol > 0.0) {
        return Err(invalid("rank tolerance must be positive"));
    }
    let d = p.features();
    if p.n() == 0 || d == 0 {
        return Ok(Matrix::zeros(d, 0));
    }
    let svd = numerics::thin_svd(p.x());
    let s_max = svd.s[0];
    let r = if s_max == 0.0 {
        0
    } else {
        svd.s.iter().filter(|&&s| s > tol * s_max).count()
    };
    Ok(Matrix::from_fn(d, r, |i, j| svd.v.get(i, j)))
}

/// Norm of the component of a flattened d × C gradient outside span(basis).
pub fn row_space_residual(basis: &Matrix, g: &[f64], outputs: usize) -> f64 {
    let d = basis.rows();
    let mut total = 0.0;
    for c in 0..outputs {
        let col: Vec<f64> = (0..d).map(|j| g[j * outputs + c]).collect();
        let coeff = basis.t_matvec(&col);
        let proj = basis.matvec(&coeff);
        total += numerics::sub(&col, &proj)
            .iter()
            .map(|v| v * v)
            .sum::<f64>();
    }
    total.sqrt()
}

/// Gradient of the Huberized loss: the link derivative is clamped so that
/// `‖f′(Wᵀxᵢ)‖·‖xᵢ‖ ≤ τ`.
pub fn huberized_link_gradient(
    p: &GlmProblem,
    w: &ParamVector,
    i: usize,
    spec: ClipSpec,
) -> Result<Vec<f64>> {
    p.check_dim(w)?;
    p.check_index(i)?;
    let (_, mut r) = p.loss_and_residual(w, i);
    let magnitude = norm(&r) * p.row_norm(i);
    if magnitude > spec.tau() {
        let f = spec.tau() / magnitude;
        r.iter_mut().for_each(|v| *v *= f);
    }
    let mut g = vec![0.0; p.dim()];
    p.add_outer(i, &r, 1.0, &mut g);
    Ok(g)
}

/// Parameters of a synthetic GLM population.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub n: usize,
    pub d: usize,
    pub link: Link,
    /// Norm of the planted parameter (signal strength).
    pub margin: f64,
    /// Label-flip probability (classification) or half-width of the uniform
    /// additive noise (squared link).
    pub noise: f64,
    pub radius: f64,
    pub seed: u64,
}

/// Draws a synthetic dataset with unit-norm feature rows.
///
/// Rows are uniform on the unit sphere, so `E[xxᵀ] = I/d`. Returns the problem
/// and the planted parameter used to generate labels.
pub fn make_synthetic(spec: &SyntheticSpec) -> Result<(GlmProblem, ParamVector)> {
    if spec.n == 0 || spec.d == 0 {
        return Err(invalid("synthetic data needs n >= 1 and d >= 1"));
    }
    if !(spec.margin >= 0.0) || !(spec.noise >= 0.0) {
        return Err(invalid("margin and noise must be >= 0"));
    }
    if matches!(spec.link, Link::Logistic | Link::Softmax { .. }) && spec.noise > 0.5 {
        return Err(invalid("label-flip probability must be <= 0.5"));
    }
    let root = RngStream::new(spec.seed, 0);
    let c = spec.link.outputs();

    let mut planted = gaussian_sample(&root.substream(0), spec.d * c, 1.0)?;
    let pn = norm(&planted);
    if pn > 0.0 {
        numerics::scale(spec.margin / pn, &mut planted);
    }

    let mut feats = gaussian_sample(&root.substream(1), spec.n * spec.d, 1.0)?;
    for row in feats.chunks_mut(spec.d) {
        let rn = norm(row);
        if rn > 0.0 {
            numerics::scale(1.0 / rn, row);
        }
    }
    let x = Matrix::new(spec.n, spec.d, feats)?;

    let mut rng = root.substream(2).rng();
    let planted_w = ParamVector(planted);
    let mut y = Vec::with_capacity(spec.n);
    for i in 0..spec.n {
        let xi = x.row(i);
        let z: Vec<f64> = (0..c)
            .map(|k| (0..spec.d).map(|j| xi[j] * planted_w[j * c + k]).sum())
            .collect();
        let label = match spec.link {
            Link::Logistic => {
                let mut lab = f64::from(u8::from(rng.gen::<f64>() < sigmoid(z[0])));
                if rng.gen::<f64>() < spec.noise {
                    lab = 1.0 - lab;
                }
                lab
            }
            Link::Softmax { classes } => {
                let zmax = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let p: Vec<f64> = z.iter().map(|v| (v - zmax).exp()).collect();
                let total: f64 = p.iter().sum();
                let u = rng.gen::<f64>() * total;
                let mut acc = 0.0;
                let mut lab = classes - 1;
                for (k, pk) in p.iter().enumerate() {
                    acc += pk;
                    if u < acc {
                        lab = k;
                        break;
                    }
                }
                if rng.gen::<f64>() < spec.noise {
                    lab = rng.gen_range(0..classes);
                }
                lab as f64
            }
            Link::Squared => z[0] + spec.noise * (2.0 * rng.gen::<f64>() - 1.0),
        };
        y.push(label);
    }

    let problem = match spec.link {
        Link::Squared => {
            // Bound |y| by the population maximum so L holds for unseen draws too.
            let ymax = spec.margin + spec.noise;
            GlmProblem::new(x, y, spec.link, spec.radius + ymax, 1.0, spec.radius)?
        }
        _ => GlmProblem::with_derived_constants(x, y, spec.link, spec.radius)?,
    };
    Ok((problem, planted_w))
}

/// Reads a dataset CSV: header `f0,…,f{d−1},label`, one example per row.
pub fn load_csv(path: &Path, link: Link, radius: f64) -> Result<GlmProblem> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| Error::Dataset(format!("{}: {e}", path.display())))?;
    let headers = rdr
        .headers()
        .map_err(|e| Error::Dataset(format!("{}: {e}", path.display())))?
        .clone();
    let ncols = headers.len();
    if ncols < 2 {
        return Err(Error::Dataset(
            "need at least one feature column and a label".into(),
        ));
    }
    let d = ncols - 1;
    for (j, h) in headers.iter().enumerate().take(d) {
        if h.trim() != format!("f{j}") {
            return Err(Error::Dataset(format!(
                "header column {j} is {h:?}, expected \"f{j}\""
            )));
        }
    }
    if headers.get(d).map(str::trim) != Some("label") {
        return Err(Error::Dataset(
            "last header column must be \"label\"".into(),
        ));
    }
    let mut data = Vec::new();
    let mut y = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::Dataset(format!("row {row}: {e}")))?;
        if rec.len() != ncols {
            return Err(Error::Dataset(format!(
                "row {row}: {} columns, expected {ncols}",
                rec.len()
            )));
        }
        for (j, field) in rec.iter().enumerate() {
            let v: f64 = field.trim().parse().map_err(|_| {
                Error::Dataset(format!("row {row}, column {j}: {field:?} is not a number"))
            })?;
            if !v.is_finite() {
                return Err(Error::Dataset(format!(
                    "row {row}, column {j}: non-finite value"
                )));
            }
            if j < d {
                data.push(v);
            } else {
                y.push(v);
            }
        }
    }
    let x = Matrix::new(y.len(), d, data)?;
    GlmProblem::with_derived_constants(x, y, link, radius)
}

/// Writes a dataset in the format read by [`load_csv`].
pub fn write_csv(p: &GlmProblem, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::Dataset(e.to_string()))?;
    let mut header: Vec<String> = (0..p.features()).map(|j| format!("f{j}")).collect();
    header.push("label".into());
    w.write_record(&header)
        .map_err(|e| Error::Dataset(e.to_string()))?;
    for i in 0..p.n() {
        let mut rec: Vec<String> = p.x().row(i).iter().map(|v| format!("{v:?}")).collect();
        rec.push(format!("{:?}", p.y()[i]));
        w.write_record(&rec)
            .map_err(|e| Error::Dataset(e.to_string()))?;
    }
    w.flush().map_err(|e| Error::Dataset(e.to_string()))?;
    Ok(())
}
