//! Marching-squares extraction of level sets and their connected pieces.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{Component, VectorField};
use crate::geom::{bounding_box, Rect, Vec2};

pub const DEFAULT_GRID: usize = 257;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelComponent {
    pub points: Vec<Vec2>,
    pub closed: bool,
    pub bbox: Rect,
}

impl LevelComponent {
    pub fn length(&self) -> f64 {
        self.points.windows(2).map(|w| w[0].dist(w[1])).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelSetScan {
    pub window: Rect,
    pub level: f64,
    pub component: Component,
    pub grid: usize,
    pub components: Vec<LevelComponent>,
}

impl LevelSetScan {
    /// Rows `component,closed,x,y`, one per polyline vertex.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("component,closed,x,y\n");
        for (k, c) in self.components.iter().enumerate() {
            for p in &c.points {
                out.push_str(&format!("{},{},{},{}\n", k, c.closed, p.x, p.y));
            }
        }
        out
    }
}

/// Vertex samples of `h` on a square-cell grid, with a per-cell activity mask.
#[derive(Debug, Clone)]
pub struct ScalarGrid {
    pub window: Rect,
    pub n: usize,
    pub component: Component,
    values: Vec<f64>,
    active: Vec<bool>,
}

impl ScalarGrid {
    /// Samples with cells touching the closed disk masked out.
    pub fn sample(field: &VectorField, comp: Component, window: Rect, n: usize) -> Result<Self> {
        let sigma = field.sigma();
        Self::sample_masked(field, comp, window, n, |cell| cell.min_origin_distance() > sigma)
    }

    /// Samples keeping only the cells for which `keep` holds and which
    /// avoid the closed disk.
    pub fn sample_masked(
        field: &VectorField,
        comp: Component,
        window: Rect,
        n: usize,
        keep: impl Fn(&Rect) -> bool,
    ) -> Result<Self> {
        if !window.is_valid() || n < 2 {
            return Err(Error::Precondition(format!("invalid scan window {window:?} or grid {n}")));
        }
        let sigma = field.sigma();
        let mut values = Vec::with_capacity(n * n);
        for j in 0..n {
            for i in 0..n {
                values.push(field.scalar(comp, vertex(&window, n, i, j)));
            }
        }
        let mut active = Vec::with_capacity((n - 1) * (n - 1));
        for j in 0..n - 1 {
            for i in 0..n - 1 {
                let a = vertex(&window, n, i, j);
                let b = vertex(&window, n, i + 1, j + 1);
                let cell = Rect::new(a.x, b.x, a.y, b.y);
                active.push(cell.min_origin_distance() > sigma && keep(&cell));
            }
        }
        Ok(Self { window, n, component: comp, values, active })
    }

    pub fn cell_size(&self) -> f64 {
        self.window.width().max(self.window.height()) / (self.n - 1) as f64
    }

    fn value(&self, i: usize, j: usize) -> f64 {
        self.values[j * self.n + i]
    }

    /// Values at vertices of active cells.
    pub fn active_values(&self) -> Vec<f64> {
        let n = self.n;
        let mut used = vec![false; n * n];
        for j in 0..n - 1 {
            for i in 0..n - 1 {
                if self.active[j * (n - 1) + i] {
                    for (di, dj) in [(0, 0), (1, 0), (0, 1), (1, 1)] {
                        used[(j + dj) * n + i + di] = true;
                    }
                }
            }
        }
        self.values.iter().zip(used).filter(|(_, u)| *u).map(|(v, _)| *v).collect()
    }

    /// Connected pieces of `{h = level}` over the active cells.
    pub fn components(&self, field: &VectorField, level: f64) -> Vec<LevelComponent> {
        let n = self.n;
        let m = n - 1;
        let h_id = |i: usize, j: usize| j * m + i;
        let v_id = |i: usize, j: usize| m * n + i * m + j;
        let above = |i: usize, j: usize| self.value(i, j) >= level;

        let mut links: HashMap<usize, Vec<usize>> = HashMap::new();
        let mut link = |a: usize, b: usize| {
            links.entry(a).or_default().push(b);
            links.entry(b).or_default().push(a);
        };
        for j in 0..m {
            for i in 0..m {
                if !self.active[j * m + i] {
                    continue;
                }
                let b = [above(i, j), above(i + 1, j), above(i + 1, j + 1), above(i, j + 1)];
                // Edges in order bottom, right, top, left.
                let e = [h_id(i, j), v_id(i + 1, j), h_id(i, j + 1), v_id(i, j)];
                let cut = [b[0] != b[1], b[1] != b[2], b[2] != b[3], b[3] != b[0]];
                let count = cut.iter().filter(|&&c| c).count();
                if count == 2 {
                    let idx: Vec<usize> = (0..4).filter(|&k| cut[k]).collect();
                    link(e[idx[0]], e[idx[1]]);
                } else if count == 4 {
                    let a = vertex(&self.window, n, i, j);
                    let c = vertex(&self.window, n, i + 1, j + 1);
                    let centre_above = field.scalar(self.component, (a + c) * 0.5) >= level;
                    // Corners unlike the centre are cut off by their two edges.
                    if centre_above == b[0] {
                        link(e[0], e[1]);
                        link(e[2], e[3]);
                    } else {
                        link(e[3], e[0]);
                        link(e[1], e[2]);
                    }
                }
            }
        }

        let mut positions: HashMap<usize, Vec2> = HashMap::new();
        let mut position = |id: usize| -> Vec2 {
            *positions.entry(id).or_insert_with(|| {
                let (p, q) = if id < m * n {
                    let (i, j) = (id % m, id / m);
                    ((i, j), (i + 1, j))
                } else {
                    let k = id - m * n;
                    let (i, j) = (k / m, k % m);
                    ((i, j), (i, j + 1))
                };
                let a = vertex(&self.window, n, p.0, p.1);
                let b = vertex(&self.window, n, q.0, q.1);
                edge_root(field, self.component, a, b, level)
            })
        };

        let mut keys: Vec<usize> = links.keys().copied().collect();
        keys.sort_unstable();
        let mut visited: HashMap<usize, bool> = HashMap::new();
        let mut out = Vec::new();
        // Open chains start at degree-one nodes; whatever remains is a loop.
        for pass in 0..2 {
            for &start in &keys {
                if visited.contains_key(&start) {
                    continue;
                }
                let deg = links[&start].len();
                if pass == 0 && deg != 1 {
                    continue;
                }
                let mut chain = vec![start];
                visited.insert(start, true);
                let mut prev = usize::MAX;
                let mut cur = start;
                let mut closed = false;
                loop {
                    let next = links[&cur].iter().copied().find(|&x| x != prev && !visited.contains_key(&x));
                    match next {
                        Some(x) => {
                            visited.insert(x, true);
                            chain.push(x);
                            prev = cur;
                            cur = x;
                        }
                        None => {
                            if pass == 1 && chain.len() > 2 && links[&cur].contains(&start) {
                                closed = true;
                            }
                            break;
                        }
                    }
                }
                let mut points: Vec<Vec2> = chain.iter().map(|&id| position(id)).collect();
                if closed {
                    points.push(points[0]);
                }
                let bbox = bounding_box(&points).expect("chain is non-empty");
                out.push(LevelComponent { points, closed, bbox });
            }
        }
        out
    }
}

fn vertex(window: &Rect, n: usize, i: usize, j: usize) -> Vec2 {
    let t = |k: usize| k as f64 / (n - 1) as f64;
    Vec2::new(
        window.x_min + (window.x_max - window.x_min) * t(i),
        window.y_min + (window.y_max - window.y_min) * t(j),
    )
}

/// Point on `[a, b]` where `h = level`, by Illinois false position with a
/// bisection guard. The endpoint signs bracket the level by construction.
pub fn edge_root(field: &VectorField, comp: Component, a: Vec2, b: Vec2, level: f64) -> Vec2 {
    let phi = |t: f64| field.scalar(comp, a + (b - a) * t) - level;
    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
    let (mut flo, mut fhi) = (phi(lo), phi(hi));
    if flo == 0.0 {
        return a;
    }
    if fhi == 0.0 {
        return b;
    }
    let target = 1e-3 * super::leaf::leaf_tol(level);
    let mut side = 0;
    for it in 0..200 {
        let mut t = if it % 4 == 3 { 0.5 * (lo + hi) } else { (lo * fhi - hi * flo) / (fhi - flo) };
        if !(t > lo && t < hi) {
            t = 0.5 * (lo + hi);
        }
        let ft = phi(t);
        if ft.abs() <= target || hi - lo <= 4.0 * f64::EPSILON {
            return a + (b - a) * t;
        }
        if (ft >= 0.0) == (flo >= 0.0) {
            lo = t;
            flo = ft;
            if side == -1 {
                fhi *= 0.5;
            }
            side = -1;
        } else {
            hi = t;
            fhi = ft;
            if side == 1 {
                flo *= 0.5;
            }
            side = 1;
        }
    }
    a + (b - a) * (0.5 * (lo + hi))
}

pub fn level_components(
    field: &VectorField,
    comp: Component,
    level: f64,
    window: Rect,
    grid: usize,
) -> Result<LevelSetScan> {
    let g = ScalarGrid::sample(field, comp, window, grid)?;
    Ok(LevelSetScan { window, level, component: comp, grid, components: g.components(field, level) })
}

/// Sorted-sample quantile with nearest-rank rounding.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    let k = ((sorted.len() - 1) as f64 * q).round() as usize;
    sorted[k.min(sorted.len() - 1)]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::builtin::{LinearHurwitz, ModelReeb};

    #[test]
    fn vertical_line_is_one_open_component() {
        let f = VectorField::from_field(LinearHurwitz::new());
        let scan = level_components(&f, Component::F, -3.0, Rect::new(1.0, 5.0, -5.0, 5.0), 65).unwrap();
        assert_eq!(scan.components.len(), 1);
        let c = &scan.components[0];
        assert!(!c.closed);
        assert!(c.points.iter().all(|p| (p.x - 3.0).abs() < 1e-12));
    }

    #[test]
    fn hyperbola_branches() {
        let f = VectorField::from_field(ModelReeb::new());
        let scan = level_components(&f, Component::F, 1.0, Rect::centered_square(3.0), 129).unwrap();
        assert_eq!(scan.components.len(), 2);
    }
}
