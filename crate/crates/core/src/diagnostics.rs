//! Quantities measured along a t-sweep: Schwarz trace, eigenvalue
//! envelopes, fiber collapse rates, volume ratios, fiber geometry, and
//! log-log exponent fits.

use nalgebra::DMatrix;
use num_complex::Complex64;
use petgraph::algo::dijkstra;
use petgraph::graph::{NodeIndex, UnGraph};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::field::{BaseField, PeriodicScalarField};
use crate::form::{ddbar, generalized_eigen_range, trace_pair, FiberForm, HermitianFormField};
use crate::grid::GridSpec;
use crate::scenario::AdiabaticFamily;
use crate::solver::SolveReport;
use crate::spectral::{self, SpectralPlan};

/// Least-squares line through `(log t, log q)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExponentFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub points: usize,
}

pub const MIN_FIT_POINTS: usize = 4;

pub fn exponent_fit(pairs: &[(f64, f64)]) -> Result<ExponentFit> {
    if pairs.len() < MIN_FIT_POINTS {
        return Err(LabError::TooFewPoints(pairs.len()));
    }
    if let Some(&(t, q)) = pairs.iter().find(|&&(t, q)| !(t > 0.0 && q > 0.0 && t.is_finite() && q.is_finite())) {
        return Err(LabError::InvalidInput(format!(
            "exponent fit needs positive data, got ({t}, {q})"
        )));
    }
    let n = pairs.len() as f64;
    let xs: Vec<f64> = pairs.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = pairs.iter().map(|p| p.1.ln()).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    if sxx == 0.0 {
        return Err(LabError::InvalidInput("exponent fit needs distinct t values".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (y - intercept - slope * x).powi(2))
        .sum();
    let r_squared = if syy == 0.0 { 1.0 } else { 1.0 - ss_res / syy };
    Ok(ExponentFit {
        slope,
        intercept,
        r_squared,
        points: pairs.len(),
    })
}

/// Sup and inf of `tr_{ω̃_t} ω_0`.
pub fn schwarz_trace(report: &SolveReport, family: &AdiabaticFamily) -> Result<(f64, f64)> {
    let metric = report.metric(family)?;
    let tr = trace_pair(&metric, family.omega_0())?;
    Ok((tr.sup(), tr.inf()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EnvelopeMode {
    /// `ω̃_t` against `ω_X`.
    Total,
    /// `ω̃_t|_{X_y}` against `t·ω_y`.
    Fiber,
}

pub fn eigenvalue_envelope(report: &SolveReport, family: &AdiabaticFamily, mode: EnvelopeMode) -> Result<(f64, f64)> {
    let metric = report.metric(family)?;
    Ok(envelope_of(&metric, family, report.t, mode))
}

fn envelope_of(metric: &HermitianFormField, family: &AdiabaticFamily, t: f64, mode: EnvelopeMode) -> (f64, f64) {
    match mode {
        EnvelopeMode::Total => generalized_eigen_range(metric, family.omega_x()),
        EnvelopeMode::Fiber => {
            let d = family.fibration().fiber_dim();
            generalized_eigen_range(&metric.block(0, d), &family.omega_x().block(0, d).scale(t))
        }
    }
}

/// `|∇^{ω_y} g̃|²_{ω_y}` on one fiber, where `g̃` and `h` are fiber forms.
fn covariant_derivative_norm(g: &FiberForm, h: &FiberForm) -> PeriodicScalarField {
    let grid = h.grid();
    let plan = spectral::plan(grid);
    let d = h.dim();
    let len = grid.len();
    let component = |form: &FiberForm, i: usize, k: usize| -> Vec<Complex64> {
        (0..len).map(|idx| form.entry(idx, i, k)).collect()
    };
    // dg[(p*d + i)*d + k] = ∂_p g_{ik̄}; same layout for dh.
    let mut dg = Vec::with_capacity(d * d * d);
    let mut dh = Vec::with_capacity(d * d * d);
    for p in 0..d {
        for i in 0..d {
            for k in 0..d {
                dg.push(plan.dz_complex(&component(g, i, k), p));
                dh.push(plan.dz_complex(&component(h, i, k), p));
            }
        }
    }
    let inv = h.inverse_coeffs();
    let at = |v: &[Vec<Complex64>], p: usize, i: usize, k: usize, idx: usize| v[(p * d + i) * d + k][idx];
    let values = (0..len)
        .into_par_iter()
        .map(|idx| {
            let hi = &inv[idx * d * d..(idx + 1) * d * d];
            let mut t = vec![Complex64::new(0.0, 0.0); d * d * d];
            for p in 0..d {
                for i in 0..d {
                    for k in 0..d {
                        let mut v = at(&dg, p, i, k, idx);
                        for l in 0..d {
                            // Γ^l_{pi} = h^{l q̄} ∂_p h_{i q̄}
                            let mut gamma = Complex64::new(0.0, 0.0);
                            for q in 0..d {
                                gamma += hi[q * d + l] * at(&dh, p, i, q, idx);
                            }
                            v -= gamma * g.entry(idx, l, k);
                        }
                        t[(p * d + i) * d + k] = v;
                    }
                }
            }
            let mut s = 0.0;
            for p in 0..d {
                for q in 0..d {
                    for i in 0..d {
                        for j in 0..d {
                            for k in 0..d {
                                for l in 0..d {
                                    let w = hi[q * d + p] * hi[j * d + i] * hi[k * d + l];
                                    s += (w * t[(p * d + i) * d + k] * t[(q * d + j) * d + l].conj()).re;
                                }
                            }
                        }
                    }
                }
            }
            s.max(0.0)
        })
        .collect();
    PeriodicScalarField::from_vec(grid, values)
}

/// Sup over the fiber `X_y` of `|∇^{ω_y} ω̃_y|²_{ω_y}`.
pub fn fiber_c3_norm(report: &SolveReport, family: &AdiabaticFamily, y: usize) -> Result<f64> {
    let metric = report.metric(family)?;
    Ok(fiber_c3_of(&metric, family, y))
}

fn fiber_c3_of(metric: &HermitianFormField, family: &AdiabaticFamily, y: usize) -> f64 {
    let fib = family.fibration();
    let g = fib.restrict_to_fiber(metric, y);
    let h = fib.restrict_to_fiber(family.omega_x(), y);
    covariant_derivative_norm(&g, &h).sup()
}

/// `S_fiber = max_y sup |∇^{ω_y} ω̃_y|²_{ω_y}`.
pub fn max_fiber_c3_norm(report: &SolveReport, family: &AdiabaticFamily) -> Result<f64> {
    let metric = report.metric(family)?;
    Ok(max_fiber_c3_of(&metric, family))
}

fn max_fiber_c3_of(metric: &HermitianFormField, family: &AdiabaticFamily) -> f64 {
    (0..family.fibration().base_len())
        .into_par_iter()
        .map(|y| fiber_c3_of(metric, family, y))
        .reduce(|| 0.0, f64::max)
}

/// `max_y sup_{X_y} |φ_t - φ̄_t|` with `ω_y`-weighted fiber averages.
pub fn oscillation(report: &SolveReport, family: &AdiabaticFamily) -> f64 {
    let fib = family.fibration();
    let avg = fib.pullback(&fib.fiber_average(&report.phi, family.omega_x()));
    report.phi.sub(&avg).sup_abs()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct VolumeRatio {
    /// Extremes of `(ω̃_y^{n-m} / ω_y^{n-m}) / t^{n-m}` over all fibers.
    pub max: f64,
    pub min: f64,
    /// `‖(ω_y + i∂∂̄ψ)^{n-m} - ω̃_y^{n-m}/t^{n-m}‖∞` relative to `ω_y^{n-m}`,
    /// with `ψ = (φ - φ̄)/t`.
    pub identity_residual: f64,
}

pub const VOLUME_IDENTITY_TOL: f64 = 1e-8;

pub fn volume_ratio_check(report: &SolveReport, family: &AdiabaticFamily) -> Result<VolumeRatio> {
    let metric = report.metric(family)?;
    volume_ratio_of(&metric, report, family)
}

fn volume_ratio_of(metric: &HermitianFormField, report: &SolveReport, family: &AdiabaticFamily) -> Result<VolumeRatio> {
    let fib = family.fibration();
    let d = fib.fiber_dim();
    let t = report.t;
    let scale = t.powi(d as i32);
    let tilde = metric.block(0, d).determinant();
    let reference = family.omega_x().block(0, d);
    let base_det = reference.determinant();
    let ratio = tilde.zip_map(&base_det, |a, b| a / b / scale);
    let psi = fib.fiber_normalized_potential(&report.phi, family.omega_x(), t)?;
    let lhs = reference.add(&ddbar(&psi).block(0, d)).determinant();
    let identity_residual = lhs
        .values()
        .iter()
        .zip(tilde.values())
        .zip(base_det.values())
        .fold(0.0f64, |m, ((l, r), b)| m.max((l - r / scale).abs() / b));
    if !(identity_residual <= VOLUME_IDENTITY_TOL) {
        return Err(LabError::VolumeIdentity {
            residual: identity_residual,
        });
    }
    Ok(VolumeRatio {
        max: ratio.sup(),
        min: ratio.inf(),
        identity_residual,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FiberGeometry {
    /// Graph shortest-path diameter; discretization error about `2/N` per
    /// unit length.
    pub diameter: f64,
    /// `1/λ₁` of the Laplace-Beltrami operator.
    pub poincare_const: f64,
    pub lambda_1: f64,
}

/// Sources used for the diameter when the fiber grid is large.
const DIAMETER_SOURCES: usize = 64;
const ALL_SOURCES_LIMIT: usize = 1024;

pub fn fiber_geometry_constants(omega_y: &FiberForm) -> Result<FiberGeometry> {
    if !omega_y.is_metric() {
        return Err(LabError::NotMetric);
    }
    let lambda_1 = first_eigenvalue(omega_y);
    Ok(FiberGeometry {
        diameter: graph_diameter(omega_y),
        poincare_const: 1.0 / lambda_1,
        lambda_1,
    })
}

/// Length of the straight edge `v` (in grid steps) under the coefficient
/// matrix `h`, for the Riemannian metric `2 Re h_{jk̄} dz^j dz̄^k`.
fn edge_length(h: &[Complex64], d: usize, v: &[i64], step: f64) -> f64 {
    let xi: Vec<Complex64> = (0..d)
        .map(|j| Complex64::new(v[2 * j] as f64, v[2 * j + 1] as f64) * step)
        .collect();
    let mut q = 0.0;
    for j in 0..d {
        for k in 0..d {
            q += (h[j * d + k] * xi[j] * xi[k].conj()).re;
        }
    }
    (2.0 * q).max(0.0).sqrt()
}

fn graph_diameter(omega: &FiberForm) -> f64 {
    let grid = omega.grid();
    let d = grid.dim();
    let axes = grid.axes();
    let len = grid.len();
    let offsets: Vec<Vec<i64>> = (0..3usize.pow(axes as u32))
        .map(|mut code| {
            (0..axes)
                .map(|_| {
                    let o = (code % 3) as i64 - 1;
                    code /= 3;
                    o
                })
                .collect()
        })
        .filter(|v: &Vec<i64>| v.iter().any(|&o| o != 0))
        .collect();
    let mut graph: UnGraph<(), f64> = UnGraph::with_capacity(len, len * offsets.len() / 2);
    let nodes: Vec<NodeIndex> = (0..len).map(|_| graph.add_node(())).collect();
    let step = grid.step();
    for idx in 0..len {
        for v in &offsets {
            // Each undirected edge once: first nonzero offset positive.
            if v.iter().find(|&&o| o != 0) != Some(&1) {
                continue;
            }
            let mut other = idx;
            for (axis, &o) in v.iter().enumerate() {
                other = grid.shifted(other, axis, o as isize);
            }
            let mid: Vec<Complex64> = omega
                .at(idx)
                .iter()
                .zip(omega.at(other))
                .map(|(a, b)| (a + b) * 0.5)
                .collect();
            graph.add_edge(nodes[idx], nodes[other], edge_length(&mid, d, v, step));
        }
    }
    let sources: Vec<usize> = if len <= ALL_SOURCES_LIMIT {
        (0..len).collect()
    } else {
        (0..DIAMETER_SOURCES).map(|i| i * len / DIAMETER_SOURCES).collect()
    };
    sources
        .into_par_iter()
        .map(|s| {
            dijkstra(&graph, nodes[s], None, |e| *e.weight())
                .values()
                .fold(0.0f64, |m, &v| m.max(v))
        })
        .reduce(|| 0.0, f64::max)
}

/// Discrete Laplace-Beltrami pencil `(A, W)` on a fiber, restricted to the
/// modes that derivatives see.
struct LaplacePencil {
    plan: std::sync::Arc<SpectralPlan>,
    d: usize,
    /// `w·h^{jk̄}` pointwise, `w = 2^d det h`.
    weighted_inverse: Vec<Complex64>,
    weight: Vec<f64>,
    symbol: Vec<f64>,
}

impl LaplacePencil {
    fn new(omega: &FiberForm) -> Self {
        let grid = omega.grid();
        let plan = spectral::plan(grid);
        let d = grid.dim();
        let scale = 2f64.powi(d as i32);
        let weight: Vec<f64> = omega.determinant().values().iter().map(|v| scale * v).collect();
        let inv = omega.inverse_coeffs();
        let weighted_inverse: Vec<Complex64> = inv
            .chunks(d * d)
            .zip(&weight)
            .flat_map(|(m, &w)| m.iter().map(move |c| c * w))
            .collect();
        let mut mean = vec![Complex64::new(0.0, 0.0); d * d];
        for chunk in weighted_inverse.chunks(d * d) {
            mean.iter_mut().zip(chunk).for_each(|(a, c)| *a += c);
        }
        mean.iter_mut().for_each(|a| *a /= grid.len() as f64);
        let symbol = (0..grid.len())
            .map(|idx| {
                let mut s = 0.0;
                for j in 0..d {
                    for k in 0..d {
                        s += 2.0 * (plan.dz(idx, k).conj() * mean[k * d + j] * plan.dz(idx, j)).re;
                    }
                }
                s
            })
            .collect();
        Self {
            plan,
            d,
            weighted_inverse,
            weight,
            symbol,
        }
    }

    fn len(&self) -> usize {
        self.weight.len()
    }

    /// Drop null-mode content, keeping the mean.
    fn project(&self, u: &[f64]) -> Vec<f64> {
        let mut spec = self.plan.forward_real(u);
        spec.iter_mut().enumerate().skip(1).for_each(|(idx, c)| {
            if self.plan.is_null_mode(idx) {
                *c = Complex64::new(0.0, 0.0);
            }
        });
        self.plan.inverse_real(spec)
    }

    /// `A u = 2 Σ ∂_k^*(w h^{jk̄} ∂_j u)`.
    fn stiffness(&self, u: &[f64]) -> Vec<f64> {
        let d = self.d;
        let len = self.len();
        let spec = self.plan.forward_real(u);
        let grads: Vec<Vec<Complex64>> = (0..d).map(|j| self.plan.apply(&spec, |idx| self.plan.dz(idx, j))).collect();
        let mut total = vec![Complex64::new(0.0, 0.0); len];
        for k in 0..d {
            let mut flux: Vec<Complex64> = (0..len)
                .map(|i| (0..d).map(|j| self.weighted_inverse[i * d * d + k * d + j] * grads[j][i]).sum())
                .collect();
            self.plan.forward(&mut flux);
            flux.iter_mut().enumerate().for_each(|(idx, c)| *c *= self.plan.dz(idx, k).conj());
            total.iter_mut().zip(&flux).for_each(|(t, f)| *t += f);
        }
        self.plan.inverse(&mut total);
        total.into_iter().map(|c| 2.0 * c.re).collect()
    }

    fn mass(&self, u: &[f64]) -> Vec<f64> {
        self.project(&u.iter().zip(&self.weight).map(|(a, w)| a * w).collect::<Vec<_>>())
    }

    fn precondition(&self, r: &[f64]) -> Vec<f64> {
        let spec = self.plan.forward_real(r);
        self.plan
            .apply(&spec, |idx| {
                if self.plan.is_null_mode(idx) || self.symbol[idx] == 0.0 {
                    Complex64::new(0.0, 0.0)
                } else {
                    Complex64::new(1.0 / self.symbol[idx], 0.0)
                }
            })
            .into_iter()
            .map(|c| c.re)
            .collect()
    }

    /// Preconditioned CG for `A x = b` on mean-zero, null-free fields.
    fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = vec![0.0; b.len()];
        let mut r = b.to_vec();
        let b_norm = dot(b, b).sqrt();
        if b_norm == 0.0 {
            return x;
        }
        let mut z = self.precondition(&r);
        let mut p = z.clone();
        let mut rz = dot(&r, &z);
        for _ in 0..500 {
            let ap = self.stiffness(&p);
            let alpha = rz / dot(&p, &ap);
            axpy(&mut x, alpha, &p);
            axpy(&mut r, -alpha, &ap);
            if dot(&r, &r).sqrt() <= 1e-13 * b_norm {
                break;
            }
            z = self.precondition(&r);
            let rz_next = dot(&r, &z);
            let beta = rz_next / rz;
            rz = rz_next;
            p.iter_mut().zip(&z).for_each(|(pi, zi)| *pi = zi + beta * *pi);
        }
        x
    }

    fn remove_constants(&self, u: &mut [f64]) {
        let c = dot(u, &self.weight) / self.weight.iter().sum::<f64>();
        u.iter_mut().for_each(|v| *v -= c);
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn axpy(y: &mut [f64], a: f64, x: &[f64]) {
    y.iter_mut().zip(x).for_each(|(yi, xi)| *yi += a * xi);
}

/// Smallest nonzero eigenvalue of `A u = λ W u` by block inverse iteration
/// with Rayleigh-Ritz, started from the lowest Fourier modes.
fn first_eigenvalue(omega: &FiberForm) -> f64 {
    let pencil = LaplacePencil::new(omega);
    let grid: GridSpec = omega.grid();
    let axes = grid.axes();
    let mut block: Vec<Vec<f64>> = Vec::with_capacity(2 * axes);
    for axis in 0..axes {
        for phase in [0.0, 0.25] {
            let v: Vec<f64> = (0..grid.len())
                .map(|i| (2.0 * std::f64::consts::PI * (grid.point(i)[axis] + phase)).cos())
                .collect();
            block.push(v);
        }
    }
    let mut previous = f64::INFINITY;
    let mut lambda = f64::INFINITY;
    for _ in 0..200 {
        let next: Vec<Vec<f64>> = block
            .par_iter()
            .map(|x| {
                let mut x = pencil.project(x);
                pencil.remove_constants(&mut x);
                pencil.solve(&pencil.mass(&x))
            })
            .collect();
        let (values, vectors) = rayleigh_ritz(&pencil, &next);
        block = vectors;
        lambda = values;
        if (previous - lambda).abs() <= 1e-13 * lambda {
            break;
        }
        previous = lambda;
    }
    lambda
}

/// Smallest Ritz value of the pencil on `span(basis)` and the W-orthonormal
/// Ritz vectors.
fn rayleigh_ritz(pencil: &LaplacePencil, basis: &[Vec<f64>]) -> (f64, Vec<Vec<f64>>) {
    let b = basis.len();
    let a_basis: Vec<Vec<f64>> = basis.par_iter().map(|x| pencil.stiffness(x)).collect();
    let m_basis: Vec<Vec<f64>> = basis.par_iter().map(|x| pencil.mass(x)).collect();
    let k = DMatrix::from_fn(b, b, |i, j| 0.5 * (dot(&basis[i], &a_basis[j]) + dot(&basis[j], &a_basis[i])));
    let m = DMatrix::from_fn(b, b, |i, j| 0.5 * (dot(&basis[i], &m_basis[j]) + dot(&basis[j], &m_basis[i])));
    // Whiten through the eigenbasis of the Gram matrix to survive near-dependence.
    let gram = m.symmetric_eigen();
    let floor = gram.eigenvalues.max() * 1e-12;
    let keep: Vec<usize> = (0..b).filter(|&i| gram.eigenvalues[i] > floor).collect();
    let whiten = DMatrix::from_fn(b, keep.len(), |r, c| {
        gram.eigenvectors[(r, keep[c])] / gram.eigenvalues[keep[c]].sqrt()
    });
    let reduced = whiten.transpose() * &k * &whiten;
    let reduced = (&reduced + reduced.transpose()) * 0.5;
    let eig = reduced.symmetric_eigen();
    let mut order: Vec<usize> = (0..keep.len()).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let coeffs = &whiten * &eig.eigenvectors;
    let vectors = order
        .iter()
        .map(|&c| {
            let mut v = vec![0.0; pencil.len()];
            for (r, x) in basis.iter().enumerate() {
                axpy(&mut v, coeffs[(r, c)], x);
            }
            v
        })
        .collect();
    (eig.eigenvalues[order[0]], vectors)
}

/// One row of a sweep table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticRecord {
    pub t: f64,
    pub residual: f64,
    pub iterations: usize,
    pub schwarz_sup: f64,
    pub schwarz_inf: f64,
    pub env_total_min: f64,
    pub env_total_max: f64,
    pub env_fiber_min: f64,
    pub env_fiber_max: f64,
    pub s_fiber: f64,
    pub osc: f64,
    pub vol_ratio: f64,
    pub sup_phi: f64,
    pub limit_diff_c0: Option<f64>,
    pub limit_diff_c1: Option<f64>,
}

impl DiagnosticRecord {
    pub const COLUMNS: [&'static str; 15] = [
        "t",
        "residual",
        "iterations",
        "schwarz_sup",
        "schwarz_inf",
        "env_total_min",
        "env_total_max",
        "env_fiber_min",
        "env_fiber_max",
        "s_fiber",
        "osc",
        "vol_ratio",
        "sup_phi",
        "limit_diff_c0",
        "limit_diff_c1",
    ];

    /// Values in `COLUMNS` order; absent limit data is `None`.
    pub fn row(&self) -> [Option<f64>; 15] {
        [
            Some(self.t),
            Some(self.residual),
            Some(self.iterations as f64),
            Some(self.schwarz_sup),
            Some(self.schwarz_inf),
            Some(self.env_total_min),
            Some(self.env_total_max),
            Some(self.env_fiber_min),
            Some(self.env_fiber_max),
            Some(self.s_fiber),
            Some(self.osc),
            Some(self.vol_ratio),
            Some(self.sup_phi),
            self.limit_diff_c0,
            self.limit_diff_c1,
        ]
    }
}

/// Every diagnostic of one solve. `limit` is the base limit potential when
/// it is known.
pub fn diagnose(report: &SolveReport, family: &AdiabaticFamily, limit: Option<&BaseField>) -> Result<DiagnosticRecord> {
    let metric = report.metric(family)?;
    let tr = trace_pair(&metric, family.omega_0())?;
    let (env_total_min, env_total_max) = envelope_of(&metric, family, report.t, EnvelopeMode::Total);
    let (env_fiber_min, env_fiber_max) = envelope_of(&metric, family, report.t, EnvelopeMode::Fiber);
    let vol = volume_ratio_of(&metric, report, family)?;
    let (limit_diff_c0, limit_diff_c1) = match limit {
        Some(psi) => {
            let diff = report.phi.sub(&family.fibration().pullback(psi));
            (Some(diff.sup_abs()), Some(diff.gradient_norm().sup()))
        }
        None => (None, None),
    };
    Ok(DiagnosticRecord {
        t: report.t,
        residual: report.final_residual,
        iterations: report.iterations,
        schwarz_sup: tr.sup(),
        schwarz_inf: tr.inf(),
        env_total_min,
        env_total_max,
        env_fiber_min,
        env_fiber_max,
        s_fiber: max_fiber_c3_of(&metric, family),
        osc: oscillation(report, family),
        vol_ratio: vol.max,
        sup_phi: report.sup_norm_phi,
        limit_diff_c0,
        limit_diff_c1,
    })
}

/// Records with `t` at most this value enter the exponent fits.
pub const FIT_T_MAX: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepFits {
    pub osc: Option<ExponentFit>,
    pub s_fiber: Option<ExponentFit>,
    pub limit_diff_c0: Option<ExponentFit>,
    /// `C = S_fiber(1/2)·2^{1/2}` so that `S_fiber ≤ C t^{1/2}` is the bound
    /// under test.
    pub s_fiber_bound_constant: Option<f64>,
    /// Sweep points where `S_fiber > C t^{1/2}`.
    pub s_fiber_bound_violations: Vec<f64>,
}

fn fit_column<F: Fn(&DiagnosticRecord) -> Option<f64>>(records: &[DiagnosticRecord], column: F) -> Option<ExponentFit> {
    let pairs: Vec<(f64, f64)> = records
        .iter()
        .filter(|r| r.t <= FIT_T_MAX)
        .filter_map(|r| column(r).map(|q| (r.t, q)))
        .filter(|&(_, q)| q > 0.0)
        .collect();
    exponent_fit(&pairs).ok()
}

pub fn sweep_fits(records: &[DiagnosticRecord]) -> SweepFits {
    let constant = records
        .iter()
        .find(|r| (r.t - 0.5).abs() < 1e-12)
        .map(|r| r.s_fiber / 0.5f64.sqrt());
    let violations = match constant {
        Some(c) => records
            .iter()
            .filter(|r| r.s_fiber > c * r.t.sqrt() * (1.0 + 1e-12) + 1e-24)
            .map(|r| r.t)
            .collect(),
        None => Vec::new(),
    };
    SweepFits {
        osc: fit_column(records, |r| Some(r.osc)),
        s_fiber: fit_column(records, |r| Some(r.s_fiber)),
        limit_diff_c0: fit_column(records, |r| r.limit_diff_c0),
        s_fiber_bound_constant: constant,
        s_fiber_bound_violations: violations,
    }
}

/// `max/min` over an ordered window of a column minus one, the relative
/// variation used by the boundedness checks.
pub fn relative_variation(values: &[f64]) -> f64 {
    let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
    if lo <= 0.0 {
        return f64::INFINITY;
    }
    hi / lo - 1.0
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{build_family, Mode, ModeKind, ScenarioSpec};
    use crate::solver::{solve_potential, SolverConfig};
    use std::f64::consts::PI;

    #[test]
    fn fit_examples() {
        let ts: Vec<f64> = (0..6).map(|i| 0.5f64.powi(i)).collect();
        let f = exponent_fit(&ts.iter().map(|&t| (t, 3.0 * t)).collect::<Vec<_>>()).unwrap();
        assert!((f.slope - 1.0).abs() < 1e-12 && (f.intercept - 3f64.ln()).abs() < 1e-12);
        assert!((f.r_squared - 1.0).abs() < 1e-12);
        let f2 = exponent_fit(&ts.iter().map(|&t| (t, t * t)).collect::<Vec<_>>()).unwrap();
        assert!((f2.slope - 2.0).abs() < 1e-12);
        let noise = [0.01, -0.01, 0.005, -0.007, 0.0, 0.01];
        let f3 = exponent_fit(&ts.iter().zip(noise).map(|(&t, e)| (t, t * (1.0 + e))).collect::<Vec<_>>()).unwrap();
        assert!((f3.slope - 1.0).abs() <= 0.02 && f3.r_squared >= 0.999);
        assert!(matches!(exponent_fit(&[(1.0, 1.0); 3]), Err(LabError::TooFewPoints(3))));
        assert!(exponent_fit(&[(1.0, 1.0), (0.5, 0.0), (0.25, 1.0), (0.1, 1.0)]).is_err());
    }

    #[test]
    fn flat_fiber_geometry() {
        let g = GridSpec::new(1, 16).unwrap();
        let geo = fiber_geometry_constants(&HermitianFormField::flat(g)).unwrap();
        assert!((geo.diameter - 0.5f64.sqrt()).abs() < 1e-12, "{}", geo.diameter);
        assert!((geo.poincare_const - 1.0 / (4.0 * PI * PI)).abs() < 1e-9, "{}", geo.poincare_const);
        let scaled = fiber_geometry_constants(&HermitianFormField::flat(g).scale(3.0).into_metric().unwrap()).unwrap();
        assert!((scaled.diameter - geo.diameter * 3f64.sqrt()).abs() < 1e-12);
        assert!((scaled.poincare_const - 3.0 * geo.poincare_const).abs() < 1e-9);
    }

    #[test]
    fn perturbed_fiber_geometry_is_comparable() {
        let g = GridSpec::new(1, 16).unwrap();
        let rho = PeriodicScalarField::from_fn(g, |p| 0.004 * (2.0 * PI * p[0]).cos() * (2.0 * PI * p[1]).cos()).unwrap();
        let omega = HermitianFormField::flat(g).add(&ddbar(&rho)).into_metric().unwrap();
        let flat = HermitianFormField::flat(g);
        let (lo, hi) = generalized_eigen_range(&omega, &flat);
        let delta = (1.0 - lo).max(hi - 1.0);
        let geo = fiber_geometry_constants(&omega).unwrap();
        let diam = geo.diameter / 0.5f64.sqrt();
        let poin = geo.poincare_const * 4.0 * PI * PI;
        assert!((1.0 - 3.0 * delta..=1.0 + 3.0 * delta).contains(&diam), "{diam} {delta}");
        assert!((1.0 - 3.0 * delta..=1.0 + 3.0 * delta).contains(&poin), "{poin} {delta}");
    }

    #[test]
    fn product_scenario_closed_forms() {
        let family = build_family(&ScenarioSpec::product(2, 1)).unwrap();
        let config = SolverConfig::default();
        for t in [1.0, 0.25] {
            let report = solve_potential(&family, t, &config, None).unwrap();
            let (sup, inf) = schwarz_trace(&report, &family).unwrap();
            assert!((sup - 1.0 / (1.0 + t)).abs() < 1e-12 && (inf - 1.0 / (1.0 + t)).abs() < 1e-12);
            let (lo, hi) = eigenvalue_envelope(&report, &family, EnvelopeMode::Total).unwrap();
            assert!((lo - t).abs() < 1e-12 && (hi - 1.0 - t).abs() < 1e-12);
            let (lo, hi) = eigenvalue_envelope(&report, &family, EnvelopeMode::Fiber).unwrap();
            assert!((lo - 1.0).abs() < 1e-12 && (hi - 1.0).abs() < 1e-12);
            assert!(max_fiber_c3_norm(&report, &family).unwrap() < 1e-12);
            let vol = volume_ratio_check(&report, &family).unwrap();
            assert!((vol.max - 1.0).abs() < 1e-12 && (vol.min - 1.0).abs() < 1e-12);
            assert!(vol.identity_residual <= 1e-10);
            assert!(oscillation(&report, &family) < 1e-12);
        }
    }

    #[test]
    fn v_only_oscillation_vanishes() {
        let spec = ScenarioSpec::product(2, 1).with_v(Mode {
            k: vec![0, 0, 1, 0],
            amplitude: 0.05,
            kind: ModeKind::Cos,
        });
        let family = build_family(&spec).unwrap();
        let report = solve_potential(&family, 0.5, &SolverConfig::default(), None).unwrap();
        assert!(oscillation(&report, &family) < 1e-10);
        let rec = diagnose(&report, &family, None).unwrap();
        assert!(rec.limit_diff_c0.is_none());
        assert!(rec.s_fiber < 1e-12);
    }

    #[test]
    fn c3_norm_of_flat_multiple_in_perturbed_fiber() {
        // g̃ = s·flat against h = flat + i∂∂̄ρ: ∇g̃ = -s Γ, nonzero and ∝ s².
        let g = GridSpec::new(1, 16).unwrap();
        let rho = PeriodicScalarField::from_fn(g, |p| 0.01 * (2.0 * PI * p[0]).cos()).unwrap();
        let h = HermitianFormField::flat(g).add(&ddbar(&rho)).into_metric().unwrap();
        let a = covariant_derivative_norm(&HermitianFormField::flat(g).scale(0.5), &h).sup();
        let b = covariant_derivative_norm(&HermitianFormField::flat(g).scale(0.25), &h).sup();
        assert!(a > 0.0 && (a / b - 4.0).abs() < 1e-10);
        assert!(covariant_derivative_norm(&h, &h).sup() < 1e-20);
    }
}
