//! Synthetic datasets with known covariances, and a linear
//! principal-subspace reconstructor.
//!
//! Every record draws from its own ChaCha stream (`seed`, stream = record
//! index), so any index range can be regenerated independently and the
//! output never depends on how generation is chunked.

use std::f64::consts::PI;
use std::io::{Read, Write};
use std::ops::Range;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{check_len, Error, Result};
use crate::estimator::TrainRecord;
use crate::gaussian::{chol_factor, sym_eigen, DenseCovariance};
use crate::io::{read_f64s, read_magic, read_u32, write_f64s, write_u32};
use crate::linalg::Matrix;
use crate::scalar::Real;
use crate::sparse::GridShape;

pub const MAX_ELLIPSE_ATTEMPTS: usize = 100;

/// The RNG used for record `index` of a dataset generated from `seed`.
pub fn record_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

pub fn standard_normals<T: Real, R: Rng>(rng: &mut R, n: usize) -> Vec<T> {
    (0..n).map(|_| T::lit(rng.sample(StandardNormal))).collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct SynthRecord<T> {
    pub mean: Vec<T>,
    pub sample: Vec<T>,
    pub gt_cov: DenseCovariance<T>,
}

impl<T: Real> SynthRecord<T> {
    /// `x = μ + M u` with `M` the Cholesky factor of `gt_cov`.
    pub fn draw(mean: Vec<T>, gt_cov: DenseCovariance<T>, u: &[T]) -> Result<Self> {
        check_len("mean", gt_cov.dim(), mean.len())?;
        check_len("noise", gt_cov.dim(), u.len())?;
        let m = chol_factor(&gt_cov)?;
        let eps = m.matvec(u)?;
        let sample = mean.iter().zip(&eps).map(|(&a, &b)| a + b).collect();
        Ok(Self {
            mean,
            sample,
            gt_cov,
        })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Training record conditioned on the mean itself.
    pub fn into_train(self, keep_cov: bool) -> TrainRecord<T> {
        TrainRecord {
            cond: self.mean.clone(),
            mean: self.mean,
            target: self.sample,
            gt_cov: keep_cov.then_some(self.gt_cov),
        }
    }
}

/// Natural cubic spline through `(knots_x, knots_y)` evaluated at `query_x`.
pub fn cubic_spline<T: Real>(knots_x: &[T], knots_y: &[T], query_x: &[T]) -> Result<Vec<T>> {
    let m = knots_x.len();
    check_len("knot values", m, knots_y.len())?;
    if m < 2 {
        return Err(Error::InvalidConfig("a spline needs at least two knots".into()));
    }
    if knots_x.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidConfig("knot positions must be strictly increasing".into()));
    }
    let h: Vec<T> = knots_x.windows(2).map(|w| w[1] - w[0]).collect();
    let slope: Vec<T> = (0..m - 1).map(|i| (knots_y[i + 1] - knots_y[i]) / h[i]).collect();

    // Second derivatives; zero at both ends, interior by the Thomas algorithm.
    let mut second = vec![T::zero(); m];
    if m > 2 {
        let k = m - 2;
        let two = T::lit(2.0);
        let six = T::lit(6.0);
        let mut diag: Vec<T> = (0..k).map(|i| two * (h[i] + h[i + 1])).collect();
        let mut rhs: Vec<T> = (0..k).map(|i| six * (slope[i + 1] - slope[i])).collect();
        for i in 1..k {
            let w = h[i] / diag[i - 1];
            diag[i] = diag[i] - w * h[i];
            rhs[i] = rhs[i] - w * rhs[i - 1];
        }
        second[k] = rhs[k - 1] / diag[k - 1];
        for i in (0..k - 1).rev() {
            second[i + 1] = (rhs[i] - h[i + 1] * second[i + 2]) / diag[i];
        }
    }

    let (lo, hi) = (knots_x[0], knots_x[m - 1]);
    let six = T::lit(6.0);
    query_x
        .iter()
        .map(|&q| {
            if !(q >= lo && q <= hi) {
                return Err(Error::OutOfRange {
                    what: "spline query",
                    value: q.to_f64_lossy(),
                    lo: lo.to_f64_lossy(),
                    hi: hi.to_f64_lossy(),
                });
            }
            let k = knots_x[1..m - 1].iter().take_while(|&&x| x <= q).count();
            let (a, b) = (knots_x[k + 1] - q, q - knots_x[k]);
            let hk = h[k];
            Ok(second[k] * a * a * a / (six * hk)
                + second[k + 1] * b * b * b / (six * hk)
                + (knots_y[k] / hk - second[k] * hk / six) * a
                + (knots_y[k + 1] / hk - second[k + 1] * hk / six) * b)
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct SplineConfig {
    pub n_points: usize,
    pub n_knots: usize,
    /// Kernel length scale in grid units.
    pub proto_lengthscale: f64,
    pub proto_variance: f64,
    pub jitter: f64,
    pub seed: u64,
}

impl Default for SplineConfig {
    fn default() -> Self {
        Self {
            n_points: 50,
            n_knots: 5,
            proto_lengthscale: 2.0,
            proto_variance: 0.05,
            jitter: 1e-4,
            seed: 0,
        }
    }
}

impl SplineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_knots < 2 || self.n_points < self.n_knots {
            return Err(Error::InvalidConfig(format!(
                "need n_points ≥ n_knots ≥ 2 (got {} points, {} knots)",
                self.n_points, self.n_knots
            )));
        }
        if !(self.proto_variance > 0.0 && self.jitter > 0.0 && self.proto_lengthscale > 0.0) {
            return Err(Error::InvalidConfig(
                "spline kernel variance, length scale and jitter must be positive".into(),
            ));
        }
        Ok(())
    }

    /// Equispaced knot positions spanning the grid `0..n_points`.
    pub fn knots_x<T: Real>(&self) -> Vec<T> {
        let span = (self.n_points - 1) as f64;
        let gaps = (self.n_knots - 1) as f64;
        (0..self.n_knots).map(|k| T::lit(k as f64 * span / gaps)).collect()
    }

    /// `K_pq = variance · exp(−(p−q)²/(2ℓ²)) + jitter · δ_pq`.
    pub fn prototype<T: Real>(&self) -> Matrix<T> {
        let n = self.n_points;
        let l2 = 2.0 * self.proto_lengthscale * self.proto_lengthscale;
        Matrix::from_fn(n, n, |p, q| {
            let d = p as f64 - q as f64;
            let mut k = self.proto_variance * (-d * d / l2).exp();
            if p == q {
                k += self.jitter;
            }
            T::lit(k)
        })
    }
}

pub fn spline_mean<T: Real>(knots_y: &[T], cfg: &SplineConfig) -> Result<Vec<T>> {
    cfg.validate()?;
    check_len("knot values", cfg.n_knots, knots_y.len())?;
    let grid: Vec<T> = (0..cfg.n_points).map(|i| T::lit(i as f64)).collect();
    cubic_spline(&cfg.knots_x(), knots_y, &grid)
}

/// `Σ = D K D` with `D = diag(|μ|) + jitter·I`.
pub fn spline_covariance<T: Real>(mean: &[T], cfg: &SplineConfig) -> Result<DenseCovariance<T>> {
    cfg.validate()?;
    check_len("spline mean", cfg.n_points, mean.len())?;
    let k = cfg.prototype::<T>();
    let jitter = T::lit(cfg.jitter);
    let d: Vec<T> = mean.iter().map(|m| m.abs() + jitter).collect();
    DenseCovariance::new(symmetric_from_upper(cfg.n_points, |p, q| d[p] * k[(p, q)] * d[q]))
}

fn symmetric_from_upper<T: Real>(n: usize, f: impl Fn(usize, usize) -> T) -> Matrix<T> {
    let mut m = Matrix::zeros(n, n);
    for p in 0..n {
        for q in p..n {
            let v = f(p, q);
            m.row_mut(p)[q] = v;
            m.row_mut(q)[p] = v;
        }
    }
    m
}

pub fn spline_record<T: Real>(cfg: &SplineConfig, index: u64) -> Result<SynthRecord<T>> {
    let mut rng = record_rng(cfg.seed, index);
    let knots_y = standard_normals(&mut rng, cfg.n_knots);
    let mean = spline_mean(&knots_y, cfg)?;
    let cov = spline_covariance(&mean, cfg)?;
    let u = standard_normals(&mut rng, cfg.n_points);
    SynthRecord::draw(mean, cov, &u)
}

pub fn gen_splines<T: Real>(count: usize, cfg: &SplineConfig) -> Result<Vec<SynthRecord<T>>> {
    gen_splines_range(0..count, cfg)
}

/// Records `range` of the dataset; identical to the matching slice of
/// [`gen_splines`].
pub fn gen_splines_range<T: Real>(range: Range<usize>, cfg: &SplineConfig) -> Result<Vec<SynthRecord<T>>> {
    cfg.validate()?;
    if range.is_empty() {
        return Err(Error::InvalidConfig("record count must be at least 1".into()));
    }
    range.map(|i| spline_record(cfg, i as u64)).collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct EllipseConfig {
    pub side: usize,
    pub lengthscale_parallel: f64,
    pub lengthscale_perp: f64,
    pub proto_variance: f64,
    pub jitter: f64,
    pub seed: u64,
}

impl Default for EllipseConfig {
    fn default() -> Self {
        Self {
            side: 16,
            lengthscale_parallel: 4.0,
            lengthscale_perp: 0.75,
            proto_variance: 0.05,
            jitter: 1e-4,
            seed: 0,
        }
    }
}

impl EllipseConfig {
    pub fn validate(&self) -> Result<()> {
        if self.side < 4 {
            return Err(Error::InvalidConfig(format!("image side must be ≥ 4, got {}", self.side)));
        }
        if !(self.lengthscale_parallel > self.lengthscale_perp && self.lengthscale_perp > 0.0) {
            return Err(Error::InvalidConfig(
                "need lengthscale_parallel > lengthscale_perp > 0".into(),
            ));
        }
        if !(self.proto_variance > 0.0 && self.jitter > 0.0) {
            return Err(Error::InvalidConfig("ellipse kernel variance and jitter must be positive".into()));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.side * self.side
    }
}

/// Geometry of one ellipse in pixel coordinates (x = column, y = row).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Ellipse {
    pub cx: f64,
    pub cy: f64,
    pub semi_a: f64,
    pub semi_b: f64,
    /// Rotation of the `semi_a` axis from the x axis, in `[0, π)`.
    pub phi: f64,
}

impl Ellipse {
    /// Row-major raster: 1 inside, −1 outside.
    pub fn rasterize<T: Real>(&self, side: usize) -> Vec<T> {
        let (s, c) = self.phi.sin_cos();
        let mut img = Vec::with_capacity(side * side);
        for row in 0..side {
            for col in 0..side {
                let (dx, dy) = (col as f64 - self.cx, row as f64 - self.cy);
                let u = (dx * c + dy * s) / self.semi_a;
                let v = (-dx * s + dy * c) / self.semi_b;
                img.push(if u * u + v * v <= 1.0 { T::one() } else { -T::one() });
            }
        }
        img
    }

    fn random<R: Rng>(rng: &mut R, side: usize) -> Self {
        let s = side as f64;
        let hi = s / 3.0;
        let lo = 2.0_f64.min(hi);
        let axis = |rng: &mut R| if hi > lo { rng.random_range(lo..hi) } else { lo };
        Self {
            cx: rng.random_range(0.25 * s..0.75 * s),
            cy: rng.random_range(0.25 * s..0.75 * s),
            semi_a: axis(rng),
            semi_b: axis(rng),
            phi: rng.random_range(0.0..PI),
        }
    }
}

/// Anisotropic squared-exponential kernel over the pixel grid, with the
/// long axis along `phi`.
pub fn ellipse_covariance<T: Real>(phi: f64, cfg: &EllipseConfig) -> Result<DenseCovariance<T>> {
    cfg.validate()?;
    let side = cfg.side;
    let (s, c) = phi.sin_cos();
    let lp2 = 2.0 * cfg.lengthscale_parallel * cfg.lengthscale_parallel;
    let lq2 = 2.0 * cfg.lengthscale_perp * cfg.lengthscale_perp;
    let m = symmetric_from_upper(side * side, |p, q| {
        let dx = (q % side) as f64 - (p % side) as f64;
        let dy = (q / side) as f64 - (p / side) as f64;
        let along = dx * c + dy * s;
        let across = -dx * s + dy * c;
        let mut k = cfg.proto_variance * (-along * along / lp2 - across * across / lq2).exp();
        if p == q {
            k += cfg.jitter;
        }
        T::lit(k)
    });
    DenseCovariance::new(m)
}

/// Random ellipse for record `index`, redrawn while it covers no pixel.
pub fn ellipse_geometry<R: Rng>(rng: &mut R, side: usize) -> Result<Ellipse> {
    for _ in 0..MAX_ELLIPSE_ATTEMPTS {
        let e = Ellipse::random(rng, side);
        let ok = e.semi_a >= 1.0
            && e.semi_b >= 1.0
            && e.rasterize::<f64>(side).iter().any(|&v| v > 0.0);
        if ok {
            return Ok(e);
        }
    }
    Err(Error::InvalidConfig(format!(
        "no non-degenerate ellipse after {MAX_ELLIPSE_ATTEMPTS} attempts"
    )))
}

pub fn ellipse_record<T: Real>(cfg: &EllipseConfig, index: u64) -> Result<SynthRecord<T>> {
    let mut rng = record_rng(cfg.seed, index);
    let e = ellipse_geometry(&mut rng, cfg.side)?;
    let cov = ellipse_covariance(e.phi, cfg)?;
    let u = standard_normals(&mut rng, cfg.dim());
    SynthRecord::draw(e.rasterize(cfg.side), cov, &u)
}

pub fn gen_ellipses<T: Real>(count: usize, cfg: &EllipseConfig) -> Result<Vec<SynthRecord<T>>> {
    gen_ellipses_range(0..count, cfg)
}

pub fn gen_ellipses_range<T: Real>(range: Range<usize>, cfg: &EllipseConfig) -> Result<Vec<SynthRecord<T>>> {
    cfg.validate()?;
    if range.is_empty() {
        return Err(Error::InvalidConfig("record count must be at least 1".into()));
    }
    range.map(|i| ellipse_record(cfg, i as u64)).collect()
}

/// Either synthetic dataset, addressed by record index.
#[derive(Clone, Debug, PartialEq)]
pub enum Dataset {
    Splines(SplineConfig),
    Ellipses(EllipseConfig),
}

impl Dataset {
    pub fn validate(&self) -> Result<()> {
        match self {
            Self::Splines(c) => c.validate(),
            Self::Ellipses(c) => c.validate(),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Self::Splines(c) => c.n_points,
            Self::Ellipses(c) => c.dim(),
        }
    }

    /// Pixel grid of one record (`n × 1` for splines).
    pub fn shape(&self) -> Result<GridShape> {
        match self {
            Self::Splines(c) => GridShape::signal(c.n_points),
            Self::Ellipses(c) => GridShape::square(c.side),
        }
    }

    pub fn record<T: Real>(&self, index: usize) -> Result<SynthRecord<T>> {
        match self {
            Self::Splines(c) => spline_record(c, index as u64),
            Self::Ellipses(c) => ellipse_record(c, index as u64),
        }
    }

    pub fn records<T: Real>(&self, range: Range<usize>) -> Result<Vec<SynthRecord<T>>> {
        match self {
            Self::Splines(c) => gen_splines_range(range, c),
            Self::Ellipses(c) => gen_ellipses_range(range, c),
        }
    }

    /// Training records for `range`, conditioned on the mean. Covariances
    /// are dropped as soon as each record is built unless `keep_cov`.
    pub fn train_records<T: Real>(&self, range: Range<usize>, keep_cov: bool) -> Result<Vec<TrainRecord<T>>> {
        self.validate()?;
        range
            .map(|i| Ok(self.record(i)?.into_train(keep_cov)))
            .collect()
    }
}

/// `μ̂(x) = mean + B Bᵀ (x − mean)` with `B` the top-`k` principal
/// directions of the training images.
#[derive(Clone, Debug)]
pub struct LinearReconstructor<T> {
    mean: Vec<T>,
    basis: Matrix<T>,
}

impl<T: Real> LinearReconstructor<T> {
    pub fn fit(images: &[Vec<T>], k: usize) -> Result<Self> {
        let n = images.first().map_or(0, Vec::len);
        if n == 0 {
            return Err(Error::InvalidConfig("no images to fit".into()));
        }
        if k > n {
            return Err(Error::OutOfRange {
                what: "reconstructor rank",
                value: k as f64,
                lo: 0.0,
                hi: n as f64,
            });
        }
        if images.len() < k + 1 {
            return Err(Error::InvalidConfig(format!(
                "rank {k} needs at least {} images, got {}",
                k + 1,
                images.len()
            )));
        }
        for img in images {
            check_len("image", n, img.len())?;
        }
        let count = T::lit(images.len() as f64);
        let mut mean = vec![T::zero(); n];
        for img in images {
            for (m, &v) in mean.iter_mut().zip(img) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= count);

        let mut cov = Matrix::<T>::zeros(n, n);
        let mut r = vec![T::zero(); n];
        for img in images {
            for ((ri, &v), &m) in r.iter_mut().zip(img).zip(&mean) {
                *ri = v - m;
            }
            for p in 0..n {
                let rp = r[p];
                if rp == T::zero() {
                    continue;
                }
                for (c, &rq) in cov.row_mut(p)[p..].iter_mut().zip(&r[p..]) {
                    *c += rp * rq;
                }
            }
        }
        let cov = symmetric_from_upper(n, |p, q| cov[(p, q)] / count);
        let eig = sym_eigen(&DenseCovariance::new(cov)?)?;
        Ok(Self {
            mean,
            basis: eig.leading(k),
        })
    }

    pub fn from_parts(mean: Vec<T>, basis: Matrix<T>) -> Result<Self> {
        check_len("basis rows", mean.len(), basis.rows())?;
        Ok(Self { mean, basis })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn rank(&self) -> usize {
        self.basis.cols()
    }

    pub fn mean(&self) -> &[T] {
        &self.mean
    }

    /// `n × k`, orthonormal columns.
    pub fn basis(&self) -> &Matrix<T> {
        &self.basis
    }

    /// `Bᵀ (x − mean)`.
    pub fn code(&self, x: &[T]) -> Result<Vec<T>> {
        check_len("image", self.dim(), x.len())?;
        let r: Vec<T> = x.iter().zip(&self.mean).map(|(&a, &b)| a - b).collect();
        self.basis.tr_matvec(&r)
    }

    pub fn decode(&self, code: &[T]) -> Result<Vec<T>> {
        let v = self.basis.matvec(code)?;
        Ok(self.mean.iter().zip(&v).map(|(&a, &b)| a + b).collect())
    }

    pub fn reconstruct(&self, x: &[T]) -> Result<Vec<T>> {
        self.decode(&self.code(x)?)
    }

    /// Training record for a residual model conditioned on the code of `x`.
    pub fn train_record(&self, x: &[T]) -> Result<TrainRecord<T>> {
        let cond = self.code(x)?;
        Ok(TrainRecord {
            mean: self.decode(&cond)?,
            cond,
            target: x.to_vec(),
            gt_cov: None,
        })
    }
}

/// Streaming writer for the `SSYN` dataset format.
pub struct SsynWriter<W: Write> {
    inner: W,
    n: usize,
    remaining: usize,
}

impl<W: Write> SsynWriter<W> {
    pub fn new(mut inner: W, n: usize, count: usize) -> Result<Self> {
        inner.write_all(b"SSYN")?;
        write_u32(&mut inner, n)?;
        write_u32(&mut inner, count)?;
        Ok(Self {
            inner,
            n,
            remaining: count,
        })
    }

    pub fn push<T: Real>(&mut self, rec: &SynthRecord<T>) -> Result<()> {
        if self.remaining == 0 {
            return Err(Error::Format {
                format: "SSYN",
                reason: "more records than declared".into(),
            });
        }
        check_len("record dimension", self.n, rec.dim())?;
        write_f64s(&mut self.inner, &rec.mean)?;
        write_f64s(&mut self.inner, &rec.sample)?;
        write_f64s(&mut self.inner, rec.gt_cov.matrix().as_slice())?;
        self.remaining -= 1;
        Ok(())
    }

    pub fn finish(mut self) -> Result<W> {
        if self.remaining != 0 {
            return Err(Error::Format {
                format: "SSYN",
                reason: format!("{} declared records were not written", self.remaining),
            });
        }
        self.inner.flush()?;
        Ok(self.inner)
    }
}

/// Streaming reader for the `SSYN` dataset format.
pub struct SsynReader<R: Read> {
    inner: R,
    n: usize,
    count: usize,
    read: usize,
}

impl<R: Read> SsynReader<R> {
    pub fn new(mut inner: R) -> Result<Self> {
        read_magic(&mut inner, b"SSYN", "SSYN")?;
        let n = read_u32(&mut inner)? as usize;
        let count = read_u32(&mut inner)? as usize;
        if n == 0 {
            return Err(Error::Format {
                format: "SSYN",
                reason: "zero dimension".into(),
            });
        }
        Ok(Self {
            inner,
            n,
            count,
            read: 0,
        })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn next_record<T: Real>(&mut self) -> Result<Option<SynthRecord<T>>> {
        if self.read == self.count {
            return Ok(None);
        }
        let n = self.n;
        let mean = read_f64s(&mut self.inner, n)?;
        let sample = read_f64s(&mut self.inner, n)?;
        let cov = Matrix::from_vec(n, n, read_f64s(&mut self.inner, n * n)?)?;
        self.read += 1;
        Ok(Some(SynthRecord {
            mean,
            sample,
            gt_cov: DenseCovariance::new(cov)?,
        }))
    }
}

pub fn write_dataset<W: Write, T: Real>(w: W, records: &[SynthRecord<T>]) -> Result<()> {
    let n = records.first().map_or(0, SynthRecord::dim);
    let mut out = SsynWriter::new(w, n, records.len())?;
    for r in records {
        out.push(r)?;
    }
    out.finish()?;
    Ok(())
}

pub fn read_dataset<R: Read, T: Real>(r: R) -> Result<Vec<SynthRecord<T>>> {
    let mut reader = SsynReader::new(r)?;
    let mut out = Vec::with_capacity(reader.count());
    while let Some(rec) = reader.next_record()? {
        out.push(rec);
    }
    Ok(out)
}
