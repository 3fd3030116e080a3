//! Witness search for half-Reeb components and the convexity probe.
//!
//! A witness is a level `c` with two pieces `A`, `B` in the window that are
//! different leaves, joined by a straight chord along which `h` is unimodal.
//! Leaves at intermediate levels must turn back to the chord (or end on the
//! disk), and the leaves through the chord ends are the non-compact edges.
//! Everything here is sound-but-incomplete: no witness is not a proof.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::contour::{edge_root, quantile, LevelComponent, ScalarGrid, DEFAULT_GRID};
use super::leaf::{trace_direction, LeafArc, LeafEnd, Trace};
use crate::error::{Error, Result};
use crate::field::{Component, VectorField};
use crate::geom::{bounding_box, point_in_polygon, point_segment_distance, Rect, Vec2};

/// Fractions of the way from `c` to the chord extremum at which the
/// intermediate leaves are checked. The first one must turn back.
const U_FRACTIONS: [f64; 7] = [0.8, 0.6, 0.4, 0.2, 0.1, 0.05, 0.02];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HalfReebControls {
    pub grid: usize,
    pub n_levels: usize,
    pub quantiles: [f64; 2],
    /// Extra levels spread over the values of `h` on the disk boundary.
    pub hole_levels: usize,
    pub doubling_rounds: u32,
    pub max_chords: usize,
    pub max_components: usize,
}

impl Default for HalfReebControls {
    fn default() -> Self {
        Self {
            grid: DEFAULT_GRID,
            n_levels: 48,
            quantiles: [0.02, 0.98],
            hole_levels: 4,
            doubling_rounds: 3,
            max_chords: 16,
            max_components: 6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Boundedness {
    Bounded,
    Unbounded,
    Unknown,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HalfReebWitness {
    pub level: f64,
    pub witness_window: Rect,
    /// Approximate compact edge, from the piece `A` end to the piece `B` end.
    pub compact_edge: [Vec2; 2],
    /// Extremal value of `h` along the compact edge.
    pub edge_extremum: f64,
    pub boundedness: Boundedness,
    pub edge_ends: [LeafEnd; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HalfReebReport {
    pub component: Component,
    pub search_window: Rect,
    pub levels: Vec<f64>,
    pub detected: Vec<HalfReebWitness>,
    pub none_found: bool,
}

impl HalfReebReport {
    pub fn bounded_only(&self) -> bool {
        self.detected.iter().all(|w| w.boundedness == Boundedness::Bounded)
    }
}

struct Search<'a> {
    field: &'a VectorField,
    comp: Component,
    window: Rect,
    outer: Rect,
    step: f64,
    cell: f64,
    ctrl: &'a HalfReebControls,
}

fn perimeter(r: &Rect) -> f64 {
    2.0 * (r.width() + r.height())
}

fn subsample(points: &[Vec2], max: usize) -> Vec<Vec2> {
    if points.len() <= max {
        return points.to_vec();
    }
    (0..max).map(|k| points[k * (points.len() - 1) / (max - 1)]).collect()
}

fn near_polyline(p: Vec2, poly: &[Vec2], tol: f64) -> bool {
    poly.windows(2).any(|w| point_segment_distance(p, w[0], w[1]) <= tol)
}

/// Arc-length position of the boundary point nearest to `p`, counterclockwise
/// from the lower-left corner.
fn perimeter_coord(r: &Rect, p: Vec2) -> f64 {
    let (w, h) = (r.width(), r.height());
    let x = p.x.clamp(r.x_min, r.x_max);
    let y = p.y.clamp(r.y_min, r.y_max);
    let d = [y - r.y_min, r.x_max - x, r.y_max - y, x - r.x_min];
    let side = (0..4).min_by(|&a, &b| d[a].total_cmp(&d[b])).unwrap_or(0);
    match side {
        0 => x - r.x_min,
        1 => w + (y - r.y_min),
        2 => w + h + (r.x_max - x),
        _ => 2.0 * w + h + (r.y_max - y),
    }
}

fn perimeter_point(r: &Rect, s: f64) -> Vec2 {
    let (w, h) = (r.width(), r.height());
    let s = s.rem_euclid(perimeter(r));
    if s <= w {
        Vec2::new(r.x_min + s, r.y_min)
    } else if s <= w + h {
        Vec2::new(r.x_max, r.y_min + (s - w))
    } else if s <= 2.0 * w + h {
        Vec2::new(r.x_max - (s - w - h), r.y_max)
    } else {
        Vec2::new(r.x_min, r.y_max - (s - 2.0 * w - h))
    }
}

/// Boundary points from `a` to `b` counterclockwise, corners included.
fn boundary_path(r: &Rect, a: Vec2, b: Vec2) -> Vec<Vec2> {
    let per = perimeter(r);
    let sa = perimeter_coord(r, a);
    let mut sb = perimeter_coord(r, b);
    if sb < sa {
        sb += per;
    }
    let (w, h) = (r.width(), r.height());
    let corners = [0.0, w, w + h, 2.0 * w + h];
    let mut path = vec![perimeter_point(r, sa)];
    let mut marks: Vec<f64> = corners
        .iter()
        .flat_map(|&c| [c, c + per])
        .filter(|&c| c > sa && c < sb)
        .collect();
    marks.sort_by(f64::total_cmp);
    path.extend(marks.into_iter().map(|s| perimeter_point(r, s)));
    path.push(perimeter_point(r, sb));
    path
}

impl<'a> Search<'a> {
    fn h(&self, p: Vec2) -> f64 {
        self.field.scalar(self.comp, p)
    }

    fn trace(&self, start: Vec2, level: f64, dir: f64, window: &Rect, budget: f64, stop: Option<(Vec2, Vec2)>) -> Option<Trace> {
        trace_direction(self.field, self.comp, start, level, dir, self.step, budget, Some(window), stop).ok()
    }

    /// Whether the leaf through a point of `a` reaches `b` inside the outer window.
    fn same_leaf(&self, a: &LevelComponent, b: &LevelComponent, level: f64) -> bool {
        let start = a.points[a.points.len() / 2];
        let target = subsample(&b.points, 256);
        let tol = 2.0 * self.cell;
        let bb = b.bbox;
        let near_box = |p: Vec2| {
            p.x >= bb.x_min - tol && p.x <= bb.x_max + tol && p.y >= bb.y_min - tol && p.y <= bb.y_max + tol
        };
        for dir in [1.0, -1.0] {
            let Some(tr) = self.trace(start, level, dir, &self.outer, 2.0 * perimeter(&self.outer), None) else {
                return true;
            };
            if tr.points.iter().any(|&p| near_box(p) && near_polyline(p, &target, tol)) {
                return true;
            }
        }
        false
    }

    /// Position and value of the single interior extremum of `h - c` along
    /// the chord, if the profile is strictly unimodal.
    fn unimodal(&self, p: Vec2, q: Vec2, level: f64) -> Option<(f64, f64)> {
        const N: usize = 64;
        let v: Vec<f64> = (0..=N).map(|k| self.h(p + (q - p) * (k as f64 / N as f64)) - level).collect();
        let s = v[N / 2].signum();
        if s == 0.0 || v[1..N].iter().any(|&x| x * s <= 0.0) {
            return None;
        }
        let w: Vec<f64> = v.iter().map(|x| x * s).collect();
        let k_max = (1..N).max_by(|&a, &b| w[a].total_cmp(&w[b]))?;
        let rising = (0..k_max).all(|k| w[k + 1] > w[k]);
        let falling = (k_max..N).all(|k| w[k + 1] < w[k]);
        if !(rising && falling) {
            return None;
        }
        // Golden-section refinement of the extremum.
        let g = 0.5 * (5f64.sqrt() - 1.0);
        let at = |t: f64| s * (self.h(p + (q - p) * t) - level);
        let (mut lo, mut hi) = ((k_max - 1) as f64 / N as f64, (k_max + 1) as f64 / N as f64);
        for _ in 0..60 {
            let x1 = hi - g * (hi - lo);
            let x2 = lo + g * (hi - lo);
            if at(x1) > at(x2) {
                hi = x2;
            } else {
                lo = x1;
            }
        }
        let t = 0.5 * (lo + hi);
        Some((t, self.h(p + (q - p) * t)))
    }

    fn witness_for_pair(&self, a: &LevelComponent, b: &LevelComponent, level: f64) -> Option<HalfReebWitness> {
        let sigma = self.field.sigma();
        let pa = subsample(&a.points, 96);
        let pb = subsample(&b.points, 96);
        let mut chords: Vec<(f64, Vec2, Vec2)> = Vec::new();
        for &p in &pa {
            for &q in &pb {
                if point_segment_distance(Vec2::ZERO, p, q) > sigma * (1.0 + 1e-6) {
                    chords.push((p.dist(q), p, q));
                }
            }
        }
        chords.sort_by(|x, y| x.0.total_cmp(&y.0));
        let mut tried = 0;
        let mut last = 0.0;
        for (len, p, q) in chords {
            if len < 1.15 * last || len <= self.cell {
                continue;
            }
            let Some((t_star, ext)) = self.unimodal(p, q, level) else {
                continue;
            };
            last = len;
            tried += 1;
            if tried > self.ctrl.max_chords {
                break;
            }
            if let Some(w) = self.witness_for_chord(p, q, level, t_star, ext) {
                return Some(w);
            }
        }
        None
    }

    fn witness_for_chord(&self, p: Vec2, q: Vec2, level: f64, t_star: f64, ext: f64) -> Option<HalfReebWitness> {
        let chord = (p, q);
        let normal = (q - p).perp();
        let m = p + (q - p) * t_star;
        let u_budget = 2.0 * perimeter(&self.outer);

        // The first intermediate leaf fixes the side on which leaves turn.
        let c_u = level + U_FRACTIONS[0] * (ext - level);
        let q1 = edge_root(self.field, self.comp, p, m, c_u);
        let mut side = 0.0;
        let mut tip = q1;
        for dir in [1.0, -1.0] {
            let tr = self.trace(q1, c_u, dir, &self.outer, u_budget, Some(chord))?;
            if tr.end == LeafEnd::Crossed {
                side = normal.dot(tr.points[0] - q1).signum();
                let line_dist = |x: Vec2| (x - p).cross(q - p).abs();
                tip = tr.points.iter().copied().max_by(|x, y| line_dist(*x).total_cmp(&line_dist(*y)))?;
                break;
            }
        }
        if side == 0.0 {
            return None;
        }
        let dir_into = |x: Vec2| {
            let t = self.field.leaf_tangent(self.comp, x);
            if normal.dot(t) * side >= 0.0 {
                1.0
            } else {
                -1.0
            }
        };
        for &frac in &U_FRACTIONS[1..] {
            let c_f = level + frac * (ext - level);
            let start = edge_root(self.field, self.comp, p, m, c_f);
            let tr = self.trace(start, c_f, dir_into(start), &self.outer, u_budget, Some(chord))?;
            if !matches!(tr.end, LeafEnd::Crossed | LeafEnd::InnerDisk) {
                return None;
            }
        }

        let edges = |window: &Rect, budget: f64| -> Option<[Trace; 2]> {
            let ea = self.trace(p, level, dir_into(p), window, budget, Some(chord))?;
            let eb = self.trace(q, level, dir_into(q), window, budget, Some(chord))?;
            Some([ea, eb])
        };
        let [ea, eb] = edges(&self.window, 2.0 * perimeter(&self.window))?;
        let ends = [ea.end, eb.end];
        let reject = |e: LeafEnd| matches!(e, LeafEnd::Closed | LeafEnd::Crossed);
        if reject(ends[0]) || reject(ends[1]) {
            return None;
        }
        let hole = |e: LeafEnd| e == LeafEnd::InnerDisk;
        let exits = |e: LeafEnd| e == LeafEnd::Window;
        // Both non-compact edges of a half-Reeb component share their far end.
        if (hole(ends[0]) && exits(ends[1])) || (exits(ends[0]) && hole(ends[1])) {
            return None;
        }
        let boundedness = if hole(ends[0]) && hole(ends[1]) {
            Boundedness::Bounded
        } else if exits(ends[0]) && exits(ends[1]) {
            if self.encloses_disk(p, q, &ea.points, &eb.points, tip) {
                return None;
            }
            self.escalate(level, &edges)
        } else {
            Boundedness::Unknown
        };

        let mut pts = vec![p, q, tip];
        pts.extend(ea.points.iter().copied());
        pts.extend(eb.points.iter().copied());
        let witness_window = bounding_box(&pts)?;
        Some(HalfReebWitness { level, witness_window, compact_edge: [p, q], edge_extremum: ext, boundedness, edge_ends: ends })
    }

    /// Whether the region cut off by the chord and the two exiting edges,
    /// closed along the window boundary on the side of `tip`, contains part
    /// of the disk. Such a region is not simply connected in the domain.
    fn encloses_disk(&self, p: Vec2, q: Vec2, ea: &[Vec2], eb: &[Vec2], tip: Vec2) -> bool {
        let (Some(&a_end), Some(&b_end)) = (ea.last(), eb.last()) else {
            return true;
        };
        let sigma = self.field.sigma();
        let probes: Vec<Vec2> = std::iter::once(Vec2::ZERO)
            .chain((0..32).map(|k| Vec2::polar(sigma * 1.01, std::f64::consts::TAU * k as f64 / 32.0)))
            .filter(|x| *x == Vec2::ZERO || self.window.contains(*x))
            .collect();
        for ccw in [true, false] {
            let mut poly = vec![p];
            poly.extend_from_slice(ea);
            if ccw {
                poly.extend(boundary_path(&self.window, a_end, b_end));
            } else {
                let mut back = boundary_path(&self.window, b_end, a_end);
                back.reverse();
                poly.extend(back);
            }
            poly.extend(eb.iter().rev().copied());
            poly.push(q);
            if point_in_polygon(tip, &poly) {
                return probes.iter().any(|&x| point_in_polygon(x, &poly));
            }
        }
        true
    }

    /// Re-traces the edges in doubled windows.
    fn escalate(&self, level: f64, edges: &dyn Fn(&Rect, f64) -> Option<[Trace; 2]>) -> Boundedness {
        for k in 1..=self.ctrl.doubling_rounds {
            let win = self.window.scaled_about_center(2f64.powi(k as i32));
            let Some([ea, eb]) = edges(&win, 2.0 * perimeter(&win)) else {
                return Boundedness::Unknown;
            };
            match (ea.end, eb.end) {
                (LeafEnd::InnerDisk, LeafEnd::InnerDisk) => return Boundedness::Bounded,
                (LeafEnd::Window, LeafEnd::Window) => {
                    let persists = ScalarGrid::sample(self.field, self.comp, win, 129)
                        .map(|g| g.components(self.field, level).len() >= 2)
                        .unwrap_or(false);
                    if !persists {
                        return Boundedness::Unknown;
                    }
                }
                _ => return Boundedness::Unknown,
            }
        }
        Boundedness::Unbounded
    }

    fn scan_level(&self, grid: &ScalarGrid, level: f64) -> Option<HalfReebWitness> {
        let mut comps: Vec<LevelComponent> = grid
            .components(self.field, level)
            .into_iter()
            .filter(|c| c.length() >= 3.0 * self.cell)
            .collect();
        if comps.len() < 2 {
            return None;
        }
        comps.sort_by(|x, y| y.length().total_cmp(&x.length()));
        comps.truncate(self.ctrl.max_components);
        for i in 0..comps.len() {
            for j in i + 1..comps.len() {
                if self.same_leaf(&comps[i], &comps[j], level) {
                    continue;
                }
                if let Some(w) = self.witness_for_pair(&comps[i], &comps[j], level) {
                    return Some(w);
                }
            }
        }
        None
    }
}

fn scan_levels(field: &VectorField, comp: Component, grid: &ScalarGrid, ctrl: &HalfReebControls) -> Vec<f64> {
    let mut vals = grid.active_values();
    if vals.is_empty() {
        return Vec::new();
    }
    vals.sort_by(f64::total_cmp);
    let lo = quantile(&vals, ctrl.quantiles[0]);
    let hi = quantile(&vals, ctrl.quantiles[1]);
    let n = ctrl.n_levels.max(1);
    let mut levels: Vec<f64> = (0..n)
        .map(|k| if n == 1 { 0.5 * (lo + hi) } else { lo + (hi - lo) * k as f64 / (n - 1) as f64 })
        .collect();
    // Levels cut by the disk are where leaves end on the boundary circle.
    let sigma = field.sigma();
    let rim: Vec<f64> = (0..256)
        .map(|k| Vec2::polar(sigma * (1.0 + 1e-9), std::f64::consts::TAU * k as f64 / 256.0))
        .filter(|p| grid.window.contains(*p))
        .map(|p| field.scalar(comp, p))
        .collect();
    if rim.len() >= 2 && ctrl.hole_levels > 0 {
        let (a, b) = rim.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
        let m = ctrl.hole_levels;
        levels.extend((1..=m).map(|k| a + (b - a) * k as f64 / (m + 1) as f64));
    }
    levels
}

pub fn detect_half_reeb(
    field: &VectorField,
    comp: Component,
    search_window: Rect,
    controls: &HalfReebControls,
) -> Result<HalfReebReport> {
    if !search_window.is_valid() {
        return Err(Error::Precondition(format!("invalid search window {search_window:?}")));
    }
    let grid = ScalarGrid::sample(field, comp, search_window, controls.grid)?;
    let levels = scan_levels(field, comp, &grid, controls);
    let side = search_window.width().min(search_window.height());
    let search = Search {
        field,
        comp,
        window: search_window,
        outer: search_window.scaled_about_center(3.0),
        step: side / 1000.0,
        cell: grid.cell_size(),
        ctrl: controls,
    };
    let detected: Vec<HalfReebWitness> =
        levels.par_iter().filter_map(|&c| search.scan_level(&grid, c)).collect();
    Ok(HalfReebReport { component: comp, search_window, none_found: detected.is_empty(), levels, detected })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Plus,
    Minus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvexityProbe {
    pub side: Side,
    pub levels_probed: usize,
    pub disconnected_levels: Vec<f64>,
    /// Every probed level is connected on the chosen side.
    pub convex: bool,
    pub side_meets_inner_disk: bool,
}

/// Probes whether the levels of `f` on one side of an `f`-leaf are connected.
/// The plus side is the one `∇f` points into. The leaf is expected to meet
/// the window in a single arc through its start point.
pub fn vertical_convexity_probe(field: &VectorField, leaf: &LeafArc, side: Side, window: Rect) -> Result<ConvexityProbe> {
    if leaf.component != Component::F {
        return Err(Error::Precondition("convexity probe needs a leaf of F(f)".into()));
    }
    if !window.is_valid() {
        return Err(Error::Precondition(format!("invalid window {window:?}")));
    }
    let s = leaf.start_index;
    if !window.contains(leaf.points[s]) {
        return Err(Error::Precondition("leaf start must lie in the probe window".into()));
    }
    let mut lo = s;
    while lo > 0 && window.contains(leaf.points[lo - 1]) {
        lo -= 1;
    }
    let mut hi = s;
    while hi + 1 < leaf.points.len() && window.contains(leaf.points[hi + 1]) {
        hi += 1;
    }
    let arc = &leaf.points[lo..=hi];
    let (first, last) = (arc[0], arc[arc.len() - 1]);
    let grad = field.gradient(Component::F, leaf.points[s]);
    let sign = if side == Side::Plus { 1.0 } else { -1.0 };
    let probe_pt = leaf.points[s] + grad.normalized() * (sign * 1e-3 * window.width().min(window.height()));

    let polygon = |ccw: bool| {
        let mut poly = arc.to_vec();
        if ccw {
            poly.extend(boundary_path(&window, last, first));
        } else {
            let mut back = boundary_path(&window, first, last);
            back.reverse();
            poly.extend(back);
        }
        poly
    };
    let poly = [polygon(true), polygon(false)]
        .into_iter()
        .find(|p| point_in_polygon(probe_pt, p))
        .ok_or_else(|| Error::Precondition("could not determine the side of the leaf".into()))?;

    let n = 129;
    let cell = window.width().max(window.height()) / (n - 1) as f64;
    let guide = subsample(arc, 400);
    // Other levels never cross the leaf, so each piece lies on one side;
    // pieces are assigned by their points rather than by masking cells.
    let grid = ScalarGrid::sample(field, Component::F, window, n)?;
    let on_side = |k: &LevelComponent| {
        let inside = k.points.iter().filter(|&&q| point_in_polygon(q, &poly)).count();
        2 * inside > k.points.len()
    };
    // Levels come from cells away from the leaf and the window edge, so that
    // curves grazing the window boundary are not counted as split.
    let inner = Rect::new(
        window.x_min + 6.0 * cell,
        window.x_max - 6.0 * cell,
        window.y_min + 6.0 * cell,
        window.y_max - 6.0 * cell,
    );
    let far = ScalarGrid::sample_masked(field, Component::F, window, n, |r: &Rect| {
        let c = r.center();
        inner.contains(c) && point_in_polygon(c, &poly) && !near_polyline(c, &guide, 6.0 * cell)
    })?;
    let mut vals = far.active_values();
    let sigma = field.sigma();
    let side_meets_inner_disk = point_in_polygon(Vec2::ZERO, &poly)
        || poly.windows(2).any(|w| point_segment_distance(Vec2::ZERO, w[0], w[1]) <= sigma);
    if vals.is_empty() {
        return Ok(ConvexityProbe { side, levels_probed: 0, disconnected_levels: vec![], convex: true, side_meets_inner_disk });
    }
    vals.sort_by(f64::total_cmp);
    let (a, b) = (quantile(&vals, 0.02), quantile(&vals, 0.98));
    let levels: Vec<f64> = (0..24).map(|k| a + (b - a) * k as f64 / 23.0).collect();
    let disconnected_levels: Vec<f64> = levels
        .par_iter()
        .copied()
        .filter(|&c| {
            grid.components(field, c).iter().filter(|k| k.length() >= 3.0 * cell && on_side(k)).count() > 1
        })
        .collect();
    Ok(ConvexityProbe {
        side,
        levels_probed: levels.len(),
        convex: disconnected_levels.is_empty(),
        disconnected_levels,
        side_meets_inner_disk,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn boundary_path_walks_corners_counterclockwise() {
        let r = Rect::new(0.0, 2.0, 0.0, 1.0);
        let path = boundary_path(&r, Vec2::new(1.0, 0.0), Vec2::new(1.0, 1.0));
        assert_eq!(path, vec![Vec2::new(1.0, 0.0), Vec2::new(2.0, 0.0), Vec2::new(2.0, 1.0), Vec2::new(1.0, 1.0)]);
        let wrap = boundary_path(&r, Vec2::new(0.0, 0.5), Vec2::new(1.0, 0.0));
        assert_eq!(wrap, vec![Vec2::new(0.0, 0.5), Vec2::new(0.0, 0.0), Vec2::new(1.0, 0.0)]);
    }
}
