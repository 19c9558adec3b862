//! Arc-length parameterized centerline, curvature lookup and conversion
//! between Cartesian poses and curvilinear (s, n, mu) coordinates.
//!
//! Between samples the centerline is a cubic Hermite curve built from the
//! sample positions and headings. Projection and its inverse use the same
//! curve, so the round trip is exact up to the projection tolerance.

use std::f64::consts::PI;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Search half-window (m) around a projection seed.
const SEED_WINDOW: f64 = 25.0;
/// Two projection minima closer than this in distance are ambiguous.
const AMBIGUITY_TOL: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrackSample {
    pub s: f64,
    pub x: f64,
    pub y: f64,
    pub psi: f64,
    pub kappa: f64,
    pub w_left: f64,
    pub w_right: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct CurvPose {
    pub s: f64,
    pub n: f64,
    pub mu: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projection {
    pub pose: CurvPose,
    /// Two distinct centerline points were equally close; the smaller `s` won.
    pub ambiguous: bool,
}

#[derive(Debug, Clone)]
pub struct Track {
    samples: Vec<TrackSample>,
    closed: bool,
    total_length: f64,
}

pub fn wrap_to_pi(a: f64) -> f64 {
    let mut a = (a + PI) % (2.0 * PI);
    if a < 0.0 {
        a += 2.0 * PI;
    }
    a - PI
}

fn unwrap_headings(psi: &mut [f64]) {
    for k in 1..psi.len() {
        psi[k] = psi[k - 1] + wrap_to_pi(psi[k] - psi[k - 1]);
    }
}

/// Signed curvature of the circle through three points (positive = left turn).
fn three_point_curvature(p0: (f64, f64), p1: (f64, f64), p2: (f64, f64)) -> f64 {
    let (ax, ay) = (p1.0 - p0.0, p1.1 - p0.1);
    let (bx, by) = (p2.0 - p1.0, p2.1 - p1.1);
    let (cx, cy) = (p2.0 - p0.0, p2.1 - p0.1);
    let cross = ax * by - ay * bx;
    let denom = (ax.hypot(ay)) * (bx.hypot(by)) * (cx.hypot(cy));
    if denom == 0.0 {
        0.0
    } else {
        2.0 * cross / denom
    }
}

impl Track {
    /// Validates and takes ownership of the samples. The track is closed when
    /// the last sample repeats the first position.
    pub fn new(mut samples: Vec<TrackSample>) -> Result<Self> {
        if samples.len() < 2 {
            return Err(Error::Validation("track needs at least two samples".into()));
        }
        for w in samples.windows(2) {
            if !(w[1].s > w[0].s) {
                return Err(Error::Validation(format!(
                    "samples not strictly increasing in s at s = {}",
                    w[1].s
                )));
            }
        }
        for smp in &samples {
            if !smp.kappa.is_finite() {
                return Err(Error::Validation(format!(
                    "non-finite curvature at s = {}",
                    smp.s
                )));
            }
            if !(smp.w_left > 0.0 && smp.w_right > 0.0) {
                return Err(Error::Validation(format!(
                    "lane width <= 0 at s = {}",
                    smp.s
                )));
            }
        }
        let s0 = samples[0].s;
        for smp in &mut samples {
            smp.s -= s0;
        }
        let mut psi: Vec<f64> = samples.iter().map(|p| p.psi).collect();
        unwrap_headings(&mut psi);
        for (smp, p) in samples.iter_mut().zip(psi) {
            smp.psi = p;
        }
        let total_length = samples[samples.len() - 1].s;
        let first = samples[0];
        let last = samples[samples.len() - 1];
        let gap = (last.x - first.x).hypot(last.y - first.y);
        let closed = gap <= 1e-6 * total_length.max(1.0);
        if closed {
            let dpsi = wrap_to_pi(last.psi - first.psi);
            if dpsi.abs() > 1e-6 * (2.0 * PI) {
                return Err(Error::Validation(format!(
                    "closed track heading mismatch of {dpsi} rad at the seam"
                )));
            }
        }
        Ok(Self {
            samples,
            closed,
            total_length,
        })
    }

    /// Builds a track from centerline points only: arc length by cumulative
    /// chord, heading by central differences, curvature by three-point fits.
    pub fn from_points(points: &[(f64, f64)], w_left: f64, w_right: f64) -> Result<Self> {
        let n = points.len();
        let cols = Columns {
            s: None,
            psi: None,
            kappa: None,
            x: points.iter().map(|p| p.0).collect(),
            y: points.iter().map(|p| p.1).collect(),
            w_left: vec![w_left; n],
            w_right: vec![w_right; n],
        };
        cols.into_track()
    }

    pub fn samples(&self) -> &[TrackSample] {
        &self.samples
    }

    pub fn is_closed(&self) -> bool {
        self.closed
    }

    pub fn total_length(&self) -> f64 {
        self.total_length
    }

    /// Maps `s` into `[0, total_length]`, wrapping on closed tracks.
    pub fn normalize_s(&self, s: f64) -> Result<f64> {
        let len = self.total_length;
        if self.closed {
            let mut w = s % len;
            if w < 0.0 {
                w += len;
            }
            Ok(w)
        } else if s >= -1e-9 && s <= len + 1e-9 {
            Ok(s.clamp(0.0, len))
        } else {
            Err(Error::Domain { s, length: len })
        }
    }

    /// Like [`Track::normalize_s`] but clamps onto an open track instead of failing.
    pub fn clamp_s(&self, s: f64) -> f64 {
        if self.closed {
            self.normalize_s(s).unwrap_or(0.0)
        } else if s.is_nan() {
            0.0
        } else {
            s.clamp(0.0, self.total_length)
        }
    }

    /// Curvature with `s` clamped onto open tracks; used by predictions
    /// that may run past the end of the line.
    pub fn curvature_clamped(&self, s: f64) -> f64 {
        self.curvature_at(self.clamp_s(s)).unwrap_or(0.0)
    }

    pub fn widths_clamped(&self, s: f64) -> (f64, f64) {
        self.widths_at(self.clamp_s(s)).unwrap_or((0.0, 0.0))
    }

    /// Index `k` of the segment `[s_k, s_{k+1}]` containing `s` (normalized).
    fn segment_of(&self, s: f64) -> usize {
        let idx = self.samples.partition_point(|p| p.s <= s);
        idx.saturating_sub(1).min(self.samples.len() - 2)
    }

    pub fn curvature_at(&self, s: f64) -> Result<f64> {
        let s = self.normalize_s(s)?;
        let k = self.segment_of(s);
        let (a, b) = (&self.samples[k], &self.samples[k + 1]);
        let t = (s - a.s) / (b.s - a.s);
        Ok(a.kappa + t * (b.kappa - a.kappa))
    }

    /// Lane widths (left, right) at `s`, linearly interpolated.
    pub fn widths_at(&self, s: f64) -> Result<(f64, f64)> {
        let s = self.normalize_s(s)?;
        let k = self.segment_of(s);
        let (a, b) = (&self.samples[k], &self.samples[k + 1]);
        let t = (s - a.s) / (b.s - a.s);
        Ok((
            a.w_left + t * (b.w_left - a.w_left),
            a.w_right + t * (b.w_right - a.w_right),
        ))
    }

    /// Hermite position, first and second derivative w.r.t. the local
    /// parameter of segment `k` at `t` in [0, 1].
    fn hermite(&self, k: usize, t: f64) -> ([f64; 2], [f64; 2], [f64; 2]) {
        let a = &self.samples[k];
        let b = &self.samples[k + 1];
        let len = b.s - a.s;
        let ta = [len * a.psi.cos(), len * a.psi.sin()];
        let tb = [len * b.psi.cos(), len * b.psi.sin()];
        let (t2, t3) = (t * t, t * t * t);
        let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
        let h10 = t3 - 2.0 * t2 + t;
        let h01 = -2.0 * t3 + 3.0 * t2;
        let h11 = t3 - t2;
        let d00 = 6.0 * t2 - 6.0 * t;
        let d10 = 3.0 * t2 - 4.0 * t + 1.0;
        let d01 = -6.0 * t2 + 6.0 * t;
        let d11 = 3.0 * t2 - 2.0 * t;
        let e00 = 12.0 * t - 6.0;
        let e10 = 6.0 * t - 4.0;
        let e01 = -12.0 * t + 6.0;
        let e11 = 6.0 * t - 2.0;
        let pa = [a.x, a.y];
        let pb = [b.x, b.y];
        let mut p = [0.0; 2];
        let mut d = [0.0; 2];
        let mut dd = [0.0; 2];
        for i in 0..2 {
            p[i] = h00 * pa[i] + h10 * ta[i] + h01 * pb[i] + h11 * tb[i];
            d[i] = d00 * pa[i] + d10 * ta[i] + d01 * pb[i] + d11 * tb[i];
            dd[i] = e00 * pa[i] + e10 * ta[i] + e01 * pb[i] + e11 * tb[i];
        }
        (p, d, dd)
    }

    fn locate(&self, s: f64) -> Result<(usize, f64)> {
        let s = self.normalize_s(s)?;
        let k = self.segment_of(s);
        let (a, b) = (&self.samples[k], &self.samples[k + 1]);
        Ok((k, ((s - a.s) / (b.s - a.s)).clamp(0.0, 1.0)))
    }

    /// Centerline point and tangent heading at `s`.
    pub fn centerline_at(&self, s: f64) -> Result<(f64, f64, f64)> {
        let (k, t) = self.locate(s)?;
        let (p, d, _) = self.hermite(k, t);
        Ok((p[0], p[1], d[1].atan2(d[0])))
    }

    fn s_of(&self, k: usize, t: f64) -> f64 {
        let a = self.samples[k].s;
        a + t * (self.samples[k + 1].s - a)
    }

    /// Minimizes the squared distance from `pt` over segment `k`.
    fn refine_segment(&self, k: usize, pt: [f64; 2]) -> (f64, f64) {
        let dist2 = |t: f64| {
            let (p, _, _) = self.hermite(k, t);
            (p[0] - pt[0]).powi(2) + (p[1] - pt[1]).powi(2)
        };
        // golden section
        let g = (5f64.sqrt() - 1.0) / 2.0;
        let (mut lo, mut hi) = (0.0f64, 1.0f64);
        let mut c = hi - g * (hi - lo);
        let mut d = lo + g * (hi - lo);
        let (mut fc, mut fd) = (dist2(c), dist2(d));
        while hi - lo > 1e-9 {
            if fc < fd {
                hi = d;
                d = c;
                fd = fc;
                c = hi - g * (hi - lo);
                fc = dist2(c);
            } else {
                lo = c;
                c = d;
                fc = fd;
                d = lo + g * (hi - lo);
                fd = dist2(d);
            }
        }
        let mut t = 0.5 * (lo + hi);
        // Newton polish on the orthogonality condition
        for _ in 0..8 {
            let (p, d1, d2) = self.hermite(k, t);
            let r = [p[0] - pt[0], p[1] - pt[1]];
            let g1 = r[0] * d1[0] + r[1] * d1[1];
            let g2 = d1[0] * d1[0] + d1[1] * d1[1] + r[0] * d2[0] + r[1] * d2[1];
            if g2 <= 0.0 {
                break;
            }
            let step = g1 / g2;
            t = (t - step).clamp(0.0, 1.0);
            if step.abs() < 1e-15 {
                break;
            }
        }
        for end in [0.0, 1.0] {
            if dist2(end) < dist2(t) {
                t = end;
            }
        }
        (t, dist2(t))
    }

    fn segment_candidates(&self, seed: Option<f64>) -> Vec<usize> {
        let nseg = self.samples.len() - 1;
        match seed.and_then(|s| self.normalize_s(s).ok()) {
            Some(s0) if self.total_length > 2.0 * SEED_WINDOW => {
                let k0 = self.segment_of(s0);
                let mut out = vec![k0];
                for dir in [-1i64, 1] {
                    let mut k = k0 as i64;
                    loop {
                        k += dir;
                        if self.closed {
                            k = k.rem_euclid(nseg as i64);
                        } else if k < 0 || k >= nseg as i64 {
                            break;
                        }
                        let ku = k as usize;
                        let gap = if dir > 0 {
                            self.samples[ku].s - self.samples[k0 + 1].s
                        } else {
                            self.samples[k0].s - self.samples[ku + 1].s
                        };
                        let gap = if self.closed {
                            gap.rem_euclid(self.total_length)
                        } else {
                            gap
                        };
                        if gap > SEED_WINDOW || out.contains(&ku) {
                            break;
                        }
                        out.push(ku);
                    }
                }
                out.sort_unstable();
                out
            }
            _ => (0..nseg).collect(),
        }
    }

    /// Projects a Cartesian pose onto the centerline. `seed` is the previous
    /// projection's `s`; when given only a window around it is searched.
    pub fn cartesian_to_curvilinear(
        &self,
        x: f64,
        y: f64,
        psi: f64,
        seed: Option<f64>,
    ) -> Result<Projection> {
        let pt = [x, y];
        let cands = self.segment_candidates(seed);
        // Coarse pass: local minima of sample distance along the candidates.
        let sd = |k: usize| {
            let p = &self.samples[k];
            (p.x - x).powi(2) + (p.y - y).powi(2)
        };
        let nseg = self.samples.len() - 1;
        let mut refine: Vec<usize> = Vec::new();
        for &k in &cands {
            let prev = if k == 0 {
                if self.closed {
                    Some(nseg - 1)
                } else {
                    None
                }
            } else {
                Some(k - 1)
            };
            let next = k + 1;
            let dk = sd(k);
            let is_min = prev.is_none_or(|p| sd(p) >= dk) && sd(next) >= dk;
            if is_min {
                for seg in [prev, Some(k)].into_iter().flatten() {
                    if cands.contains(&seg) && !refine.contains(&seg) {
                        refine.push(seg);
                    }
                }
            }
        }
        if refine.is_empty() {
            refine = cands.clone();
        }
        let mut found: Vec<(f64, f64)> = refine
            .iter()
            .map(|&k| {
                let (t, d2) = self.refine_segment(k, pt);
                (self.s_of(k, t), d2.sqrt())
            })
            .collect();
        found.sort_by(|a, b| {
            a.1.partial_cmp(&b.1)
                .unwrap()
                .then(a.0.partial_cmp(&b.0).unwrap())
        });
        let (mut s_best, d_best) = found[0];
        let mut ambiguous = false;
        for &(s, d) in &found[1..] {
            let apart = {
                let ds = (s - s_best).abs();
                let ds = if self.closed {
                    ds.min(self.total_length - ds)
                } else {
                    ds
                };
                ds > 1e-6
            };
            if apart && d - d_best <= AMBIGUITY_TOL {
                // genuinely different minimum
                let sep = if self.closed {
                    let ds = (s - s_best).abs();
                    ds.min(self.total_length - ds)
                } else {
                    (s - s_best).abs()
                };
                if sep > 2.0 * (d_best + 1.0) {
                    ambiguous = true;
                    if s < s_best {
                        s_best = s;
                    }
                }
            }
        }
        if self.closed && s_best >= self.total_length {
            s_best -= self.total_length;
        }
        let (wl, wr) = self.widths_at(s_best)?;
        if d_best > wl.max(wr) + 5.0 {
            return Err(Error::Projection(format!(
                "point ({x}, {y}) is {d_best:.3} m from the centerline"
            )));
        }
        let (cx, cy, theta) = self.centerline_at(s_best)?;
        let n = -(x - cx) * theta.sin() + (y - cy) * theta.cos();
        let kappa = self.curvature_at(s_best)?;
        if 1.0 - n * kappa <= 0.0 {
            return Err(Error::Singularity(1.0 - n * kappa));
        }
        Ok(Projection {
            pose: CurvPose {
                s: s_best,
                n,
                mu: wrap_to_pi(psi - theta),
            },
            ambiguous,
        })
    }

    /// Inverse of [`Track::cartesian_to_curvilinear`]: returns (x, y, psi).
    pub fn curvilinear_to_cartesian(&self, pose: CurvPose) -> Result<(f64, f64, f64)> {
        let (cx, cy, theta) = self.centerline_at(pose.s)?;
        Ok((
            cx - pose.n * theta.sin(),
            cy + pose.n * theta.cos(),
            wrap_to_pi(theta + pose.mu),
        ))
    }

    /// Uniform resampling at spacing close to `ds`; `s` values are kept on
    /// the original parameterization so the total length is preserved.
    pub fn resample(&self, ds: f64) -> Result<Track> {
        if !(ds > 0.0) {
            return Err(Error::Config(format!(
                "resample spacing must be positive, got {ds}"
            )));
        }
        let count = (self.total_length / ds).ceil().max(1.0) as usize;
        let step = self.total_length / count as f64;
        let mut out = Vec::with_capacity(count + 1);
        for i in 0..=count {
            let s = if i == count {
                self.total_length
            } else {
                i as f64 * step
            };
            let (k, t) = self.locate(s)?;
            let (p, d, _) = self.hermite(k, t);
            let (wl, wr) = self.widths_at(s)?;
            out.push(TrackSample {
                s,
                x: p[0],
                y: p[1],
                psi: d[1].atan2(d[0]),
                kappa: self.curvature_at(s)?,
                w_left: wl,
                w_right: wr,
            });
        }
        if self.closed {
            let first = out[0];
            let last = out.last_mut().unwrap();
            last.x = first.x;
            last.y = first.y;
        }
        Track::new(out)
    }

    /// Signed shortest progress from `from` to `to` along the track.
    pub fn progress_delta(&self, from: f64, to: f64) -> f64 {
        let d = to - from;
        if self.closed {
            let l = self.total_length;
            let w = d.rem_euclid(l);
            if w > 0.5 * l {
                w - l
            } else {
                w
            }
        } else {
            d
        }
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["s", "x", "y", "psi", "kappa", "w_left", "w_right"])?;
        for p in &self.samples {
            w.write_record(&[
                p.s.to_string(),
                p.x.to_string(),
                p.y.to_string(),
                wrap_to_pi(p.psi).to_string(),
                p.kappa.to_string(),
                p.w_left.to_string(),
                p.w_right.to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;
        Ok(())
    }
}

struct Columns {
    s: Option<Vec<f64>>,
    x: Vec<f64>,
    y: Vec<f64>,
    psi: Option<Vec<f64>>,
    kappa: Option<Vec<f64>>,
    w_left: Vec<f64>,
    w_right: Vec<f64>,
}

impl Columns {
    fn into_track(self) -> Result<Track> {
        let n = self.x.len();
        if n < 2 {
            return Err(Error::Validation("track needs at least two samples".into()));
        }
        let pts: Vec<(f64, f64)> = self.x.iter().copied().zip(self.y.iter().copied()).collect();
        for (k, w) in pts.windows(2).enumerate() {
            if (w[1].0 - w[0].0).hypot(w[1].1 - w[0].1) == 0.0 {
                return Err(Error::Validation(format!(
                    "repeated point at rows {} and {}",
                    k + 1,
                    k + 2
                )));
            }
        }
        let s = match self.s {
            Some(s) => s,
            None => {
                let mut acc = vec![0.0; n];
                for k in 1..n {
                    acc[k] = acc[k - 1] + (pts[k].0 - pts[k - 1].0).hypot(pts[k].1 - pts[k - 1].1);
                }
                acc
            }
        };
        let len = s[n - 1] - s[0];
        let closed =
            (pts[n - 1].0 - pts[0].0).hypot(pts[n - 1].1 - pts[0].1) <= 1e-6 * len.max(1.0);
        // neighbour lookup with wrap for closed tracks (last sample == first)
        let prev = |k: usize| -> Option<usize> {
            if k > 0 {
                Some(k - 1)
            } else if closed && n > 2 {
                Some(n - 2)
            } else {
                None
            }
        };
        let next = |k: usize| -> Option<usize> {
            if k + 1 < n {
                Some(k + 1)
            } else if closed && n > 2 {
                Some(1)
            } else {
                None
            }
        };
        let psi = match self.psi {
            Some(p) => p,
            None => (0..n)
                .map(|k| {
                    let a = prev(k).unwrap_or(k);
                    let b = next(k).unwrap_or(k);
                    (pts[b].1 - pts[a].1).atan2(pts[b].0 - pts[a].0)
                })
                .collect(),
        };
        let kappa = match self.kappa {
            Some(kp) => kp,
            None if n < 3 => vec![0.0; n],
            None => (0..n)
                .map(|k| match (prev(k), next(k)) {
                    (Some(a), Some(b)) => three_point_curvature(pts[a], pts[k], pts[b]),
                    (None, _) => three_point_curvature(pts[0], pts[1], pts[2]),
                    (_, None) => three_point_curvature(pts[n - 3], pts[n - 2], pts[n - 1]),
                })
                .collect(),
        };
        let samples = (0..n)
            .map(|k| TrackSample {
                s: s[k],
                x: pts[k].0,
                y: pts[k].1,
                psi: psi[k],
                kappa: kappa[k],
                w_left: self.w_left[k],
                w_right: self.w_right[k],
            })
            .collect();
        Track::new(samples)
    }
}

/// Reads a centerline CSV with header `s,x,y,psi,kappa,w_left,w_right`.
/// `s`, `psi` and `kappa` are optional and recomputed from (x, y) when absent.
pub fn load_track(path: &Path) -> Result<Track> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(file);
    let headers = rdr.headers()?.clone();
    let col = |name: &str| headers.iter().position(|h| h == name);
    let require = |name: &str| {
        col(name).ok_or_else(|| Error::MissingColumn {
            path: path.to_path_buf(),
            column: name.to_string(),
        })
    };
    let (ix, iy) = (require("x")?, require("y")?);
    let (iwl, iwr) = (require("w_left")?, require("w_right")?);
    let (is, ipsi, ikappa) = (col("s"), col("psi"), col("kappa"));

    let mut c = Columns {
        s: is.map(|_| Vec::new()),
        x: Vec::new(),
        y: Vec::new(),
        psi: ipsi.map(|_| Vec::new()),
        kappa: ikappa.map(|_| Vec::new()),
        w_left: Vec::new(),
        w_right: Vec::new(),
    };
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map(|p| p.line() as usize).unwrap_or(0);
        let field = |i: usize, name: &str| -> Result<f64> {
            let raw = rec.get(i).ok_or_else(|| Error::Parse {
                path: path.to_path_buf(),
                line,
                msg: format!("missing field `{name}`"),
            })?;
            raw.parse::<f64>().map_err(|_| Error::Parse {
                path: path.to_path_buf(),
                line,
                msg: format!("field `{name}` is not a number: {raw:?}"),
            })
        };
        c.x.push(field(ix, "x")?);
        c.y.push(field(iy, "y")?);
        c.w_left.push(field(iwl, "w_left")?);
        c.w_right.push(field(iwr, "w_right")?);
        if let (Some(i), Some(v)) = (is, c.s.as_mut()) {
            v.push(field(i, "s")?);
        }
        if let (Some(i), Some(v)) = (ipsi, c.psi.as_mut()) {
            v.push(field(i, "psi")?);
        }
        if let (Some(i), Some(v)) = (ikappa, c.kappa.as_mut()) {
            v.push(field(i, "kappa")?);
        }
    }
    c.into_track()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    pub(crate) fn circle_track(radius: f64, count: usize) -> Track {
        let samples = (0..=count)
            .map(|i| {
                let th = 2.0 * PI * i as f64 / count as f64;
                TrackSample {
                    s: radius * th,
                    x: radius * th.sin(),
                    y: radius * (1.0 - th.cos()),
                    psi: th,
                    kappa: 1.0 / radius,
                    w_left: 5.0,
                    w_right: 5.0,
                }
            })
            .collect();
        Track::new(samples).unwrap()
    }

    fn straight_track(len: f64, count: usize) -> Track {
        let pts: Vec<(f64, f64)> = (0..=count)
            .map(|i| (len * i as f64 / count as f64, 0.0))
            .collect();
        Track::from_points(&pts, 4.0, 4.0).unwrap()
    }

    fn write_tmp(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    #[test]
    fn quarter_circle_curvature_is_recomputed() {
        let mut csv = String::from("x,y,w_left,w_right\n");
        for i in 0..4 {
            let th = 0.5 * PI * i as f64 / 3.0;
            csv.push_str(&format!("{},{},3,3\n", th.sin(), 1.0 - th.cos()));
        }
        let f = write_tmp(&csv);
        let t = load_track(f.path()).unwrap();
        for smp in &t.samples()[1..3] {
            assert!((smp.kappa - 1.0).abs() < 0.05, "kappa {}", smp.kappa);
        }
    }

    #[test]
    fn straight_line_has_zero_curvature() {
        let mut csv = String::from("x,y,w_left,w_right\n");
        for i in 0..10 {
            csv.push_str(&format!("{},{},3,3\n", 2.0 * i as f64, 0.5 * i as f64));
        }
        let f = write_tmp(&csv);
        let t = load_track(f.path()).unwrap();
        assert!(t.samples().iter().all(|p| p.kappa.abs() < 1e-12));
    }

    #[test]
    fn missing_x_column_names_it() {
        let f = write_tmp("s,y,w_left,w_right\n0,0,1,1\n");
        let err = load_track(f.path()).unwrap_err();
        assert!(matches!(&err, Error::MissingColumn { column, .. } if column == "x"));
        assert!(err.to_string().contains("`x`"));
    }

    #[test]
    fn malformed_row_reports_line() {
        let f = write_tmp("x,y,w_left,w_right\n0,0,1,1\n1,abc,1,1\n");
        match load_track(f.path()).unwrap_err() {
            Error::Parse { line, .. } => assert_eq!(line, 3),
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn repeated_points_fail_validation() {
        let f = write_tmp("x,y,w_left,w_right\n0,0,1,1\n1,0,1,1\n1,0,1,1\n2,0,1,1\n");
        assert!(matches!(load_track(f.path()), Err(Error::Validation(_))));
    }

    #[test]
    fn curvature_lookup() {
        let c = circle_track(40.0, 200);
        for s in [0.0, 3.3, 100.0, 251.0] {
            assert!((c.curvature_at(s).unwrap() - 1.0 / 40.0).abs() < 1e-15);
        }
        // wrap identity
        let len = c.total_length();
        assert_eq!(
            c.curvature_at(len + 1.0).unwrap(),
            c.curvature_at(1.0).unwrap()
        );

        let two = Track::new(vec![
            TrackSample {
                s: 0.0,
                x: 0.0,
                y: 0.0,
                psi: 0.0,
                kappa: 0.0,
                w_left: 1.0,
                w_right: 1.0,
            },
            TrackSample {
                s: 10.0,
                x: 10.0,
                y: 0.0,
                psi: 0.0,
                kappa: 0.02,
                w_left: 1.0,
                w_right: 1.0,
            },
        ])
        .unwrap();
        assert!((two.curvature_at(5.0).unwrap() - 0.01).abs() < 1e-15);
        assert!(matches!(two.curvature_at(10.5), Err(Error::Domain { .. })));
    }

    #[test]
    fn projection_identity_and_sign() {
        let c = circle_track(50.0, 300);
        let k = 37;
        let smp = c.samples()[k];
        let p = c
            .cartesian_to_curvilinear(smp.x, smp.y, smp.psi, None)
            .unwrap();
        assert!((p.pose.s - smp.s).abs() < 1e-9);
        assert!(p.pose.n.abs() < 1e-9);
        assert!(p.pose.mu.abs() < 1e-9);
        assert!(!p.ambiguous);

        let st = straight_track(100.0, 50);
        let p = st.cartesian_to_curvilinear(31.0, 0.5, 0.0, None).unwrap();
        assert!((p.pose.n - 0.5).abs() < 1e-12);
        assert!((p.pose.s - 31.0).abs() < 1e-9);
        let (x, y, _) = st
            .curvilinear_to_cartesian(CurvPose {
                s: 20.0,
                n: -1.5,
                mu: 0.0,
            })
            .unwrap();
        assert!((x - 20.0).abs() < 1e-12 && (y + 1.5).abs() < 1e-12);
        let (x, y, psi) = c
            .curvilinear_to_cartesian(CurvPose {
                s: smp.s,
                n: 0.0,
                mu: 0.0,
            })
            .unwrap();
        assert!((x - smp.x).abs() < 1e-12 && (y - smp.y).abs() < 1e-12);
        assert!(wrap_to_pi(psi - smp.psi).abs() < 1e-12);
    }

    #[test]
    fn seeded_projection_matches_global() {
        let c = circle_track(80.0, 400);
        let (x, y, psi) = c
            .curvilinear_to_cartesian(CurvPose {
                s: 123.0,
                n: 1.2,
                mu: 0.1,
            })
            .unwrap();
        let a = c.cartesian_to_curvilinear(x, y, psi, None).unwrap();
        let b = c.cartesian_to_curvilinear(x, y, psi, Some(120.0)).unwrap();
        assert!((a.pose.s - b.pose.s).abs() < 1e-12);
        assert!((a.pose.n - 1.2).abs() < 1e-9);
    }

    #[test]
    fn ambiguous_projection_flags_and_picks_smaller_s() {
        // U-shaped open track: a point midway between the two legs
        let mut pts = Vec::new();
        for i in 0..=40 {
            pts.push((i as f64, 0.0));
        }
        for i in 1..=20 {
            let th = PI * i as f64 / 20.0;
            pts.push((40.0 + 3.0 * th.sin(), 3.0 - 3.0 * th.cos()));
        }
        for i in 1..=40 {
            pts.push((40.0 - i as f64, 6.0));
        }
        let t = Track::from_points(&pts, 4.0, 4.0).unwrap();
        let p = t.cartesian_to_curvilinear(20.0, 3.0, 0.0, None).unwrap();
        assert!(p.ambiguous);
        assert!(p.pose.s < 30.0);
    }

    #[test]
    fn far_point_is_rejected() {
        let st = straight_track(100.0, 50);
        assert!(matches!(
            st.cartesian_to_curvilinear(50.0, 40.0, 0.0, None),
            Err(Error::Projection(_))
        ));
    }

    #[test]
    fn resampling_preserves_length() {
        let c = circle_track(60.0, 120);
        let fine = c.resample(0.25).unwrap();
        let rel = (fine.total_length() - c.total_length()).abs() / c.total_length();
        assert!(rel < 1e-3);
        assert!(fine.is_closed());
    }

    #[test]
    fn csv_round_trip() {
        let c = circle_track(30.0, 64);
        let f = tempfile::NamedTempFile::new().unwrap();
        c.write_csv(f.path()).unwrap();
        let back = load_track(f.path()).unwrap();
        assert!(back.is_closed());
        assert_eq!(back.samples().len(), c.samples().len());
        assert!((back.total_length() - c.total_length()).abs() < 1e-9);
    }
}
