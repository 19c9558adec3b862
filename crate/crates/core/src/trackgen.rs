//! Synthetic circuits built from straights and clothoid-entered arcs.

use std::f64::consts::PI;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::track::{Track, TrackSample};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Piece {
    Straight {
        length: f64,
    },
    /// Signed heading change (positive = left), arc radius and the length of
    /// each clothoid ramp into and out of the arc.
    Corner {
        angle: f64,
        radius: f64,
        transition: f64,
    },
}

impl Piece {
    fn length(&self) -> f64 {
        match *self {
            Piece::Straight { length } => length,
            Piece::Corner {
                angle,
                radius,
                transition,
            } => radius * angle.abs() + transition,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SegmentKind {
    Straight,
    Tight,
    Medium,
    Wide,
}

impl SegmentKind {
    pub fn from_radius(radius: f64) -> Self {
        if radius < 45.0 {
            SegmentKind::Tight
        } else if radius < 150.0 {
            SegmentKind::Medium
        } else {
            SegmentKind::Wide
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentSpec {
    pub name: String,
    pub pieces: Vec<Piece>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedSegment {
    pub name: String,
    pub s_start: f64,
    pub s_end: f64,
    pub kind: SegmentKind,
    /// Smallest arc radius in the segment; infinite for straights.
    pub radius: f64,
}

#[derive(Debug, Clone)]
pub struct GeneratedTrack {
    pub track: Track,
    pub segments: Vec<NamedSegment>,
}

/// Curvature knots `(s, kappa)`, piecewise linear in between.
fn curvature_knots(pieces: &[Piece]) -> Vec<(f64, f64)> {
    let mut knots = vec![(0.0, 0.0)];
    let mut s = 0.0;
    for p in pieces {
        match *p {
            Piece::Straight { length } => {
                s += length;
                knots.push((s, 0.0));
            }
            Piece::Corner {
                angle,
                radius,
                transition,
            } => {
                let k = angle.signum() / radius;
                // ramps contribute transition * k of heading in total
                let arc = radius * angle.abs() - transition;
                s += transition;
                knots.push((s, k));
                s += arc;
                knots.push((s, k));
                s += transition;
                knots.push((s, 0.0));
            }
        }
    }
    knots
}

fn kappa_at(knots: &[(f64, f64)], s: f64) -> f64 {
    let i = knots
        .partition_point(|k| k.0 <= s)
        .clamp(1, knots.len() - 1);
    let (s0, k0) = knots[i - 1];
    let (s1, k1) = knots[i];
    if s1 <= s0 {
        return k1;
    }
    k0 + (s - s0) / (s1 - s0) * (k1 - k0)
}

/// Heading at `s`: exact integral of the piecewise-linear curvature.
fn heading_at(knots: &[(f64, f64)], s: f64) -> f64 {
    let mut psi = 0.0;
    for w in knots.windows(2) {
        let (s0, k0) = w[0];
        let (s1, k1) = w[1];
        if s <= s0 {
            break;
        }
        let e = s.min(s1);
        let ke = if s1 > s0 {
            k0 + (e - s0) / (s1 - s0) * (k1 - k0)
        } else {
            k1
        };
        psi += 0.5 * (k0 + ke) * (e - s0);
    }
    psi
}

fn integrate(knots: &[(f64, f64)], length: f64, ds: f64, width: f64) -> Vec<TrackSample> {
    let count = (length / ds).round().max(1.0) as usize;
    let step = length / count as f64;
    let sub = 20;
    let h = step / sub as f64;
    let mut x = 0.0;
    let mut y = 0.0;
    let mut out = Vec::with_capacity(count + 1);
    for i in 0..=count {
        let s = i as f64 * step;
        out.push(TrackSample {
            s,
            x,
            y,
            psi: heading_at(knots, s),
            kappa: kappa_at(knots, s),
            w_left: width,
            w_right: width,
        });
        if i == count {
            break;
        }
        for k in 0..sub {
            // Simpson on the unit tangent
            let a = s + k as f64 * h;
            let (p0, p1, p2) = (
                heading_at(knots, a),
                heading_at(knots, a + 0.5 * h),
                heading_at(knots, a + h),
            );
            x += h / 6.0 * (p0.cos() + 4.0 * p1.cos() + p2.cos());
            y += h / 6.0 * (p0.sin() + 4.0 * p1.sin() + p2.sin());
        }
    }
    out
}

fn end_point(pieces: &[Piece]) -> (f64, f64) {
    let knots = curvature_knots(pieces);
    let length: f64 = pieces.iter().map(Piece::length).sum();
    let pts = integrate(&knots, length, 1.0, 1.0);
    let last = pts.last().unwrap();
    (last.x, last.y)
}

/// Builds a track from segment specs. With `closure = Some((a, b))` the
/// lengths of straight pieces `a` and `b` (flat indices over all pieces)
/// are adjusted so the circuit closes; the total heading change must then
/// be one full left-hand turn.
pub fn build(
    specs: &[SegmentSpec],
    width: f64,
    ds: f64,
    closure: Option<(usize, usize)>,
) -> Result<GeneratedTrack> {
    let mut pieces: Vec<Piece> = specs
        .iter()
        .flat_map(|s| s.pieces.iter().copied())
        .collect();
    for p in &pieces {
        if let Piece::Corner {
            angle,
            radius,
            transition,
        } = *p
        {
            if !(radius > 0.0 && transition >= 0.0 && transition <= radius * angle.abs()) {
                return Err(Error::Config(format!(
                    "corner {p:?} has inconsistent radius/transition"
                )));
            }
        }
    }
    if let Some((a, b)) = closure {
        let turn: f64 = pieces
            .iter()
            .map(|p| match p {
                Piece::Corner { angle, .. } => *angle,
                _ => 0.0,
            })
            .sum();
        if (turn - 2.0 * PI).abs() > 1e-9 {
            return Err(Error::Config(format!(
                "closed circuit must turn 2 pi, turns {turn}"
            )));
        }
        let knots = curvature_knots(&pieces);
        let start_of = |i: usize| pieces[..i].iter().map(Piece::length).sum::<f64>();
        let (ha, hb) = (
            heading_at(&knots, start_of(a)),
            heading_at(&knots, start_of(b)),
        );
        let (gx, gy) = end_point(&pieces);
        // da * (cos ha, sin ha) + db * (cos hb, sin hb) = -gap
        let det = ha.cos() * hb.sin() - hb.cos() * ha.sin();
        if det.abs() < 1e-3 {
            return Err(Error::Config("closure straights are parallel".into()));
        }
        let da = (-gx * hb.sin() + gy * hb.cos()) / det;
        let db = (-gy * ha.cos() + gx * ha.sin()) / det;
        for (i, d) in [(a, da), (b, db)] {
            match &mut pieces[i] {
                Piece::Straight { length } => {
                    *length += d;
                    if *length <= 1.0 {
                        return Err(Error::Config(format!(
                            "closure makes straight {i} non-positive"
                        )));
                    }
                }
                _ => {
                    return Err(Error::Config(format!(
                        "closure piece {i} is not a straight"
                    )))
                }
            }
        }
    }
    let knots = curvature_knots(&pieces);
    let length: f64 = pieces.iter().map(Piece::length).sum();
    let mut samples = integrate(&knots, length, ds, width);
    if closure.is_some() {
        let n = samples.len() - 1;
        let (x0, y0) = (samples[0].x, samples[0].y);
        let gap = (samples[n].x - x0).hypot(samples[n].y - y0);
        if gap > 1e-3 {
            return Err(Error::Validation(format!("closure left a gap of {gap} m")));
        }
        samples[n].x = x0;
        samples[n].y = y0;
    }
    let track = Track::new(samples)?;

    let mut segments = Vec::new();
    let mut s = 0.0;
    let mut k = 0;
    for spec in specs {
        let len: f64 = pieces[k..k + spec.pieces.len()]
            .iter()
            .map(Piece::length)
            .sum();
        let radius = pieces[k..k + spec.pieces.len()]
            .iter()
            .filter_map(|p| match p {
                Piece::Corner { radius, .. } => Some(*radius),
                _ => None,
            })
            .fold(f64::INFINITY, f64::min);
        segments.push(NamedSegment {
            name: spec.name.clone(),
            s_start: s,
            s_end: s + len,
            kind: if radius.is_finite() {
                SegmentKind::from_radius(radius)
            } else {
                SegmentKind::Straight
            },
            radius,
        });
        s += len;
        k += spec.pieces.len();
    }
    if let Some(last) = segments.last_mut() {
        last.s_end = track.total_length();
    }
    Ok(GeneratedTrack { track, segments })
}

fn deg(a: f64) -> f64 {
    a.to_radians()
}

fn straight(length: f64) -> Piece {
    Piece::Straight { length }
}

fn corner(angle_deg: f64, radius: f64, transition: f64) -> Piece {
    Piece::Corner {
        angle: deg(angle_deg),
        radius,
        transition,
    }
}

fn seg(name: &str, pieces: Vec<Piece>) -> SegmentSpec {
    SegmentSpec {
        name: name.into(),
        pieces,
    }
}

/// Segment layout of the Monza-like circuit: a long straight, two tight
/// chicanes (R = 25 m), medium corners (R = 70 m) and wide sweepers
/// (R = 250 m). Counter-clockwise.
pub fn monza_like_specs() -> Vec<SegmentSpec> {
    vec![
        seg("main-straight", vec![straight(650.0)]),
        seg(
            "variante-1",
            vec![
                corner(-60.0, 25.0, 8.0),
                straight(15.0),
                corner(60.0, 25.0, 8.0),
            ],
        ),
        seg("straight-2", vec![straight(180.0)]),
        seg("curva-grande", vec![corner(40.0, 250.0, 30.0)]),
        seg("straight-3", vec![straight(320.0)]),
        seg(
            "variante-2",
            vec![
                corner(55.0, 25.0, 8.0),
                straight(15.0),
                corner(-55.0, 25.0, 8.0),
            ],
        ),
        seg("straight-4", vec![straight(220.0)]),
        seg("lesmo-1", vec![corner(90.0, 70.0, 15.0)]),
        seg("straight-5", vec![straight(160.0)]),
        seg("lesmo-2", vec![corner(60.0, 70.0, 15.0)]),
        seg("serraglio", vec![straight(850.0)]),
        seg(
            "ascari",
            vec![
                corner(-40.0, 70.0, 15.0),
                straight(20.0),
                corner(80.0, 70.0, 15.0),
            ],
        ),
        seg("back-straight", vec![straight(500.0)]),
        seg("parabolica", vec![corner(130.0, 250.0, 40.0)]),
        seg("finish-straight", vec![straight(100.0)]),
    ]
}

/// The Monza-like circuit with 6 m half-width lanes, sampled every `ds`.
pub fn monza_like(ds: f64) -> Result<GeneratedTrack> {
    let specs = monza_like_specs();
    let flat: Vec<usize> = specs
        .iter()
        .scan(0, |k, s| {
            let start = *k;
            *k += s.pieces.len();
            Some(start)
        })
        .collect();
    // close with the main straight and the straight between the Lesmos
    build(&specs, 6.0, ds, Some((flat[0], flat[8])))
}

pub fn write_segments(segments: &[NamedSegment], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["name", "s_start", "s_end", "kind", "radius"])?;
    for s in segments {
        let kind = serde_json::to_value(s.kind)?
            .as_str()
            .unwrap_or("")
            .to_string();
        w.write_record([
            s.name.clone(),
            s.s_start.to_string(),
            s.s_end.to_string(),
            kind,
            s.radius.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn load_segments(path: &Path) -> Result<Vec<NamedSegment>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(file);
    let mut out = Vec::new();
    for (k, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let bad = |msg: String| Error::Parse {
            path: path.to_path_buf(),
            line: k + 2,
            msg,
        };
        let num = |i: usize| -> Result<f64> {
            rec.get(i)
                .unwrap_or("")
                .parse::<f64>()
                .map_err(|e| bad(format!("column {i}: {e}")))
        };
        let kind: SegmentKind =
            serde_json::from_value(serde_json::Value::String(rec.get(3).unwrap_or("").into()))
                .map_err(|e| bad(e.to_string()))?;
        out.push(NamedSegment {
            name: rec.get(0).unwrap_or("").to_string(),
            s_start: num(1)?,
            s_end: num(2)?,
            kind,
            radius: num(4)?,
        });
    }
    Ok(out)
}
