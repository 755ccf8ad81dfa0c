//! Synthetic regression data in four complexity classes, with curvature,
//! jump and data-complexity measurements.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DatagenError {
    #[error("invalid function spec: {0}")]
    InvalidSpec(String),
    #[error("invalid partition: {0}")]
    InvalidPartition(String),
    #[error("batch size {b} not in 1..={n}")]
    BatchSize { b: usize, n: usize },
    #[error("sample {index} has no value for axis {axis}")]
    MissingAxis { axis: Axis, index: usize },
    #[error("input has dimension {found}, expected {expected}")]
    Dimension { expected: usize, found: usize },
}

/// Class parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "class")]
pub enum FunctionClass {
    /// `a·x + b`
    L { a: Vec<f64>, b: f64 },
    /// Separable polynomial `Σ_i Σ_p coeffs[i][p] x_i^p`.
    P { coeffs: Vec<Vec<f64>> },
    /// `u_0 = Σ x_i / √d`, then alternately `u ← sin(ω u)` and `u ← tanh(ω u)`, `depth` times.
    H { depth: usize, omega: f64 },
    /// `slope·x_0 + Σ_j jumps[j]·[x_0 ≥ breaks[j]]`.
    D { breaks: Vec<f64>, jumps: Vec<f64>, slope: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FunctionSpec {
    pub dim: usize,
    pub seed: u64,
    #[serde(flatten)]
    pub class: FunctionClass,
}

impl FunctionSpec {
    pub fn new(dim: usize, seed: u64, class: FunctionClass) -> Result<Self, DatagenError> {
        let spec = Self { dim, seed, class };
        spec.validate()?;
        Ok(spec)
    }

    /// Default instance of each class: `2x`, `x²`, depth-3 `ω = 3`, one unit jump at 0.
    pub fn canonical(tag: char, dim: usize, seed: u64) -> Result<Self, DatagenError> {
        let class = match tag {
            'L' => FunctionClass::L {
                a: vec![2.0; dim],
                b: 0.0,
            },
            'P' => FunctionClass::P {
                coeffs: vec![vec![0.0, 0.0, 1.0]; dim],
            },
            'H' => FunctionClass::H { depth: 3, omega: 3.0 },
            'D' => FunctionClass::D {
                breaks: vec![0.0],
                jumps: vec![1.0],
                slope: 0.0,
            },
            other => return Err(DatagenError::InvalidSpec(format!("unknown class {other}"))),
        };
        Self::new(dim, seed, class)
    }

    pub fn class_tag(&self) -> char {
        match self.class {
            FunctionClass::L { .. } => 'L',
            FunctionClass::P { .. } => 'P',
            FunctionClass::H { .. } => 'H',
            FunctionClass::D { .. } => 'D',
        }
    }

    fn validate(&self) -> Result<(), DatagenError> {
        let bad = |m: String| Err(DatagenError::InvalidSpec(m));
        if self.dim == 0 {
            return bad("dim must be positive".into());
        }
        match &self.class {
            FunctionClass::L { a, b } => {
                if a.len() != self.dim || !b.is_finite() || a.iter().any(|v| !v.is_finite()) {
                    return bad(format!("L needs {} finite slopes", self.dim));
                }
            }
            FunctionClass::P { coeffs } => {
                if coeffs.len() != self.dim {
                    return bad(format!("P needs {} coefficient rows", self.dim));
                }
                let degree = self.degree().unwrap_or(0);
                if degree < 2 {
                    return bad("P needs degree >= 2".into());
                }
            }
            FunctionClass::H { depth, omega } => {
                if *depth == 0 || !(*omega >= 3.0) || !omega.is_finite() {
                    return bad("H needs depth >= 1 and finite omega >= 3".into());
                }
            }
            FunctionClass::D { breaks, jumps, slope } => {
                if breaks.is_empty() || breaks.len() != jumps.len() {
                    return bad("D needs at least two pieces and one jump per break".into());
                }
                if breaks.windows(2).any(|w| !(w[0] < w[1])) || breaks.iter().any(|b| !(-1.0 < *b && *b < 1.0)) {
                    return bad("breaks must be increasing inside (-1, 1)".into());
                }
                if !slope.is_finite() || jumps.iter().any(|j| !j.is_finite()) {
                    return bad("jumps and slope must be finite".into());
                }
            }
        }
        Ok(())
    }

    /// Highest power with a nonzero coefficient, for class P.
    pub fn degree(&self) -> Option<usize> {
        match &self.class {
            FunctionClass::P { coeffs } => coeffs
                .iter()
                .flat_map(|row| row.iter().enumerate().filter(|(_, c)| **c != 0.0).map(|(p, _)| p))
                .max(),
            _ => None,
        }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        match &self.class {
            FunctionClass::L { a, b } => a.iter().zip(x).map(|(a, x)| a * x).sum::<f64>() + b,
            FunctionClass::P { coeffs } => coeffs
                .iter()
                .zip(x)
                .map(|(row, &xi)| row.iter().rev().fold(0.0, |acc, c| acc * xi + c))
                .sum(),
            FunctionClass::H { depth, omega } => {
                let mut u = x.iter().sum::<f64>() / (x.len() as f64).sqrt();
                for l in 0..*depth {
                    u = if l % 2 == 0 { (omega * u).sin() } else { (omega * u).tanh() };
                }
                u
            }
            FunctionClass::D { breaks, jumps, slope } => {
                slope * x[0]
                    + breaks
                        .iter()
                        .zip(jumps)
                        .filter(|(b, _)| x[0] >= **b)
                        .map(|(_, j)| j)
                        .sum::<f64>()
            }
        }
    }

    /// Index of the generator piece containing `x`.
    pub fn piece(&self, x: &[f64]) -> usize {
        match &self.class {
            FunctionClass::D { breaks, .. } => breaks.iter().filter(|b| x[0] >= **b).count(),
            _ => 0,
        }
    }

    /// The generator's own pieces as boxes covering `[−1, 1]^dim`.
    pub fn natural_partition(&self) -> Vec<Region> {
        let full = Region {
            lo: vec![-1.0; self.dim],
            hi: vec![1.0; self.dim],
        };
        match &self.class {
            FunctionClass::D { breaks, .. } => {
                let mut edges = vec![-1.0];
                edges.extend(breaks);
                edges.push(1.0);
                edges
                    .windows(2)
                    .map(|w| {
                        let mut r = full.clone();
                        r.lo[0] = w[0];
                        r.hi[0] = w[1];
                        r
                    })
                    .collect()
            }
            _ => vec![full],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub spec: FunctionSpec,
    pub inputs: Vec<Vec<f64>>,
    pub outputs: Vec<f64>,
    pub pieces: Vec<usize>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    /// `x_0..x_{d−1}, y, piece_id`
    pub fn header(&self) -> Vec<String> {
        let mut h: Vec<String> = (0..self.spec.dim).map(|i| format!("x_{i}")).collect();
        h.push("y".into());
        h.push("piece_id".into());
        h
    }

    pub fn record(&self, i: usize) -> Vec<String> {
        let mut r: Vec<String> = self.inputs[i].iter().map(|v| v.to_string()).collect();
        r.push(self.outputs[i].to_string());
        r.push(self.pieces[i].to_string());
        r
    }
}

/// Draw `n` inputs uniformly from `[−1, 1]^dim` and label them with the function.
pub fn generate(spec: &FunctionSpec, n: usize) -> Result<Dataset, DatagenError> {
    spec.validate()?;
    if n == 0 {
        return Err(DatagenError::InvalidSpec("n must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let inputs: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..spec.dim).map(|_| rng.random_range(-1.0..=1.0)).collect())
        .collect();
    Ok(Dataset {
        outputs: inputs.iter().map(|x| spec.eval(x)).collect(),
        pieces: inputs.iter().map(|x| spec.piece(x)).collect(),
        spec: spec.clone(),
        inputs,
    })
}

/// Axis-aligned box `[lo, hi]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl Region {
    fn volume(&self) -> f64 {
        self.lo.iter().zip(&self.hi).map(|(a, b)| b - a).product()
    }

    fn overlap(&self, other: &Region) -> f64 {
        self.lo
            .iter()
            .zip(&self.hi)
            .zip(other.lo.iter().zip(&other.hi))
            .map(|((a0, a1), (b0, b1))| (a1.min(*b1) - a0.max(*b0)).max(0.0))
            .product()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComplexityOptions {
    pub fd_step: f64,
    /// Cell-centred evaluation points per axis inside each piece.
    pub grid: usize,
}

impl Default for ComplexityOptions {
    fn default() -> Self {
        Self { fd_step: 1e-4, grid: 16 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryTerm {
    pub piece_a: usize,
    pub piece_b: usize,
    pub axis: usize,
    pub position: f64,
    /// Mean `|f⁺ − f⁻|` over the shared face.
    pub jump: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComplexityReport {
    pub curvature: Vec<f64>,
    pub boundary: Vec<BoundaryTerm>,
    pub curvature_total: f64,
    pub boundary_total: f64,
    pub c_nonlinear: f64,
    pub warnings: Vec<String>,
}

fn fd_hessian_norm(f: &FunctionSpec, x: &[f64], h: f64) -> f64 {
    let d = x.len();
    let fx = f.eval(x);
    let mut p = x.to_vec();
    let mut total = 0.0;
    for i in 0..d {
        for j in i..d {
            let v = if i == j {
                p[i] = x[i] + h;
                let up = f.eval(&p);
                p[i] = x[i] - h;
                let down = f.eval(&p);
                p[i] = x[i];
                (up - 2.0 * fx + down) / (h * h)
            } else {
                let mut at = |si: f64, sj: f64| {
                    p[i] = x[i] + si * h;
                    p[j] = x[j] + sj * h;
                    let v = f.eval(&p);
                    p[i] = x[i];
                    p[j] = x[j];
                    v
                };
                (at(1.0, 1.0) - at(1.0, -1.0) - at(-1.0, 1.0) + at(-1.0, -1.0)) / (4.0 * h * h)
            };
            total += if i == j { v * v } else { 2.0 * v * v };
        }
    }
    total.sqrt()
}

fn grid_points(r: &Region, per_axis: usize) -> Vec<Vec<f64>> {
    let d = r.lo.len();
    let total = per_axis.pow(d as u32);
    (0..total)
        .map(|mut idx| {
            (0..d)
                .map(|k| {
                    let c = idx % per_axis;
                    idx /= per_axis;
                    r.lo[k] + (c as f64 + 0.5) / per_axis as f64 * (r.hi[k] - r.lo[k])
                })
                .collect()
        })
        .collect()
}

fn check_partition(dim: usize, partition: &[Region]) -> Result<(), DatagenError> {
    let bad = |m: String| Err(DatagenError::InvalidPartition(m));
    if partition.is_empty() {
        return bad("empty partition".into());
    }
    for (i, r) in partition.iter().enumerate() {
        if r.lo.len() != dim || r.hi.len() != dim {
            return bad(format!("piece {i} has the wrong dimension"));
        }
        if r.lo.iter().zip(&r.hi).any(|(a, b)| !(a < b) || *a < -1.0 || *b > 1.0) {
            return bad(format!("piece {i} is empty or leaves [-1, 1]^{dim}"));
        }
    }
    for i in 0..partition.len() {
        for j in i + 1..partition.len() {
            if partition[i].overlap(&partition[j]) > 1e-12 {
                return bad(format!("pieces {i} and {j} overlap"));
            }
        }
    }
    let vol: f64 = partition.iter().map(Region::volume).sum();
    let full = 2f64.powi(dim as i32);
    if (vol - full).abs() > 1e-9 * full {
        return bad(format!("pieces cover volume {vol}, domain has {full}"));
    }
    Ok(())
}

/// Faces shared by two pieces: `(a, b, axis, position, face box)`.
fn shared_faces(partition: &[Region]) -> Vec<(usize, usize, usize, f64, Region)> {
    let mut out = Vec::new();
    for a in 0..partition.len() {
        for b in 0..partition.len() {
            let (ra, rb) = (&partition[a], &partition[b]);
            for k in 0..ra.lo.len() {
                if ra.hi[k] != rb.lo[k] {
                    continue;
                }
                let mut face = Region {
                    lo: vec![0.0; ra.lo.len()],
                    hi: vec![0.0; ra.lo.len()],
                };
                let mut ok = true;
                for m in 0..ra.lo.len() {
                    if m == k {
                        face.lo[m] = ra.hi[k];
                        face.hi[m] = ra.hi[k];
                    } else {
                        face.lo[m] = ra.lo[m].max(rb.lo[m]);
                        face.hi[m] = ra.hi[m].min(rb.hi[m]);
                        ok &= face.lo[m] < face.hi[m];
                    }
                }
                if ok {
                    out.push((a, b, k, ra.hi[k], face));
                }
            }
        }
    }
    out
}

/// Per-piece mean `‖∇²f‖_F` plus mean two-sided jumps across shared faces.
///
/// One-sided limits at a face point `p` come from linear extrapolation
/// `2f(p ∓ s e) − f(p ∓ 2s e)` with `s = fd_step`.
pub fn nonlinear_complexity(
    f: &FunctionSpec,
    partition: &[Region],
    opts: &ComplexityOptions,
) -> Result<ComplexityReport, DatagenError> {
    check_partition(f.dim, partition)?;
    if !(opts.fd_step > 0.0) || opts.grid == 0 {
        return Err(DatagenError::InvalidSpec("fd_step must be positive and grid nonzero".into()));
    }
    let mut warnings = Vec::new();
    if opts.fd_step < 1e-7 {
        warnings.push(format!(
            "fd_step {:e} is below 1e-7; second differences are dominated by rounding",
            opts.fd_step
        ));
    }
    let h = opts.fd_step;
    let curvature: Vec<f64> = partition
        .iter()
        .map(|r| {
            let pts = grid_points(r, opts.grid);
            pts.iter().map(|x| fd_hessian_norm(f, x, h)).sum::<f64>() / pts.len() as f64
        })
        .collect();
    let mut boundary = Vec::new();
    for (a, b, k, pos, face) in shared_faces(partition) {
        let mut face_grid = face.clone();
        face_grid.lo[k] = pos - 0.5;
        face_grid.hi[k] = pos + 0.5;
        let mut pts = grid_points(&face_grid, opts.grid);
        pts.iter_mut().for_each(|p| p[k] = pos);
        pts.sort_by(|p, q| p.partial_cmp(q).expect("finite grid"));
        pts.dedup();
        let mut total = 0.0;
        for p in &pts {
            let side = |s: f64| {
                let mut q = p.clone();
                q[k] = pos + s * h;
                let near = f.eval(&q);
                q[k] = pos + 2.0 * s * h;
                2.0 * near - f.eval(&q)
            };
            total += (side(1.0) - side(-1.0)).abs();
        }
        boundary.push(BoundaryTerm {
            piece_a: a,
            piece_b: b,
            axis: k,
            position: pos,
            jump: total / pts.len() as f64,
        });
    }
    let curvature_total: f64 = curvature.iter().sum();
    let boundary_total: f64 = boundary.iter().map(|t| t.jump).sum();
    Ok(ComplexityReport {
        c_nonlinear: curvature_total + boundary_total,
        curvature,
        boundary,
        curvature_total,
        boundary_total,
        warnings,
    })
}

/// Data axes: scope `x`, time `y`, scale `z`, modality `m`, nonlinearity `n`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    X,
    Y,
    Z,
    M,
    N,
}

impl std::fmt::Display for Axis {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Axis::X => "x",
            Axis::Y => "y",
            Axis::Z => "z",
            Axis::M => "m",
            Axis::N => "n",
        };
        f.write_str(s)
    }
}

/// Axis values attached to one sample.
pub type AxisTags = BTreeMap<Axis, f64>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Scorer {
    Constant { value: f64 },
    /// `S = Σ_a w_a · tag_a`; every weighted axis must be tagged.
    Weighted { weights: BTreeMap<Axis, f64> },
}

impl Scorer {
    /// Unit weights on scale, time, modality and nonlinearity.
    pub fn default_weighted() -> Self {
        Scorer::Weighted {
            weights: [Axis::Z, Axis::Y, Axis::M, Axis::N].into_iter().map(|a| (a, 1.0)).collect(),
        }
    }

    pub fn score(&self, tags: &AxisTags, index: usize) -> Result<f64, DatagenError> {
        match self {
            Scorer::Constant { value } => Ok(*value),
            Scorer::Weighted { weights } => weights
                .iter()
                .map(|(axis, w)| {
                    tags.get(axis)
                        .map(|v| w * v)
                        .ok_or(DatagenError::MissingAxis { axis: *axis, index })
                })
                .sum(),
        }
    }
}

/// `Σ_{s ∈ batch} S_data(s)`.
pub fn data_complexity_batch(batch: &[AxisTags], scorer: &Scorer) -> Result<f64, DatagenError> {
    batch.iter().enumerate().map(|(i, t)| scorer.score(t, i)).sum()
}

/// Tags for a generated dataset: time is the sample's position, scale 1, modality 0,
/// nonlinearity the local Hessian norm.
pub fn default_tags(data: &Dataset, fd_step: f64) -> Vec<AxisTags> {
    let n = data.len().max(1) as f64;
    data.inputs
        .iter()
        .enumerate()
        .map(|(i, x)| {
            [
                (Axis::Y, i as f64 / n),
                (Axis::Z, 1.0),
                (Axis::M, 0.0),
                (Axis::N, fd_hessian_norm(&data.spec, x, fd_step)),
            ]
            .into_iter()
            .collect()
        })
        .collect()
}

/// Endless stream of index batches; each epoch is a fresh seeded shuffle split into
/// consecutive batches of `b`, the last one possibly shorter.
#[derive(Debug, Clone)]
pub struct MinibatchSampler {
    n: usize,
    b: usize,
    seed: u64,
    epoch: u64,
    queue: Vec<Vec<usize>>,
}

impl MinibatchSampler {
    pub fn epoch_index(&self) -> u64 {
        self.epoch
    }

    /// Batches of epoch `e`, independent of sampler state.
    pub fn epoch_batches(&self, e: u64) -> Vec<Vec<usize>> {
        let mut idx: Vec<usize> = (0..self.n).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed.wrapping_add(e));
        idx.shuffle(&mut rng);
        idx.chunks(self.b).map(<[usize]>::to_vec).collect()
    }

    /// Remaining batches of the current epoch, then advance.
    pub fn next_epoch(&mut self) -> Vec<Vec<usize>> {
        if self.queue.is_empty() {
            self.queue = self.epoch_batches(self.epoch);
            self.queue.reverse();
            self.epoch += 1;
        }
        let mut out = std::mem::take(&mut self.queue);
        out.reverse();
        out
    }
}

impl Iterator for MinibatchSampler {
    type Item = Vec<usize>;

    fn next(&mut self) -> Option<Vec<usize>> {
        if self.queue.is_empty() {
            self.queue = self.epoch_batches(self.epoch);
            self.queue.reverse();
            self.epoch += 1;
        }
        self.queue.pop()
    }
}

pub fn minibatch_sampler(n: usize, b: usize, seed: u64) -> Result<MinibatchSampler, DatagenError> {
    if b == 0 || b > n {
        return Err(DatagenError::BatchSize { b, n });
    }
    Ok(MinibatchSampler {
        n,
        b,
        seed,
        epoch: 0,
        queue: Vec::new(),
    })
}
