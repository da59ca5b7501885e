//! Bowyer–Watson Delaunay triangulation for small point sets.

use std::collections::{BTreeSet, HashMap};

use crate::graph::Point;

#[derive(Copy, Clone, Debug)]
struct Triangle {
    v: [usize; 3],
    // circumcircle
    cx: f64,
    cy: f64,
    r2: f64,
}

impl Triangle {
    fn new(pts: &[Point], a: usize, b: usize, c: usize) -> Option<Self> {
        let (pa, pb, pc) = (pts[a], pts[b], pts[c]);
        let d = 2.0 * (pa.x * (pb.y - pc.y) + pb.x * (pc.y - pa.y) + pc.x * (pa.y - pb.y));
        if d.abs() < 1e-12 {
            return None;
        }
        let (a2, b2, c2) = (pa.x * pa.x + pa.y * pa.y, pb.x * pb.x + pb.y * pb.y, pc.x * pc.x + pc.y * pc.y);
        let cx = (a2 * (pb.y - pc.y) + b2 * (pc.y - pa.y) + c2 * (pa.y - pb.y)) / d;
        let cy = (a2 * (pc.x - pb.x) + b2 * (pa.x - pc.x) + c2 * (pb.x - pa.x)) / d;
        let r2 = (pa.x - cx).powi(2) + (pa.y - cy).powi(2);
        Some(Self { v: [a, b, c], cx, cy, r2 })
    }

    fn in_circumcircle(&self, p: Point) -> bool {
        (p.x - self.cx).powi(2) + (p.y - self.cy).powi(2) < self.r2 * (1.0 - 1e-12)
    }
}

/// Undirected Delaunay edges `(i, j)` with `i < j`, sorted.
pub fn triangulate(points: &[Point]) -> Vec<(usize, usize)> {
    let n = points.len();
    if n < 2 {
        return Vec::new();
    }
    if n == 2 {
        return vec![(0, 1)];
    }
    let (mut minx, mut miny, mut maxx, mut maxy) = (f64::MAX, f64::MAX, f64::MIN, f64::MIN);
    for p in points {
        minx = minx.min(p.x);
        miny = miny.min(p.y);
        maxx = maxx.max(p.x);
        maxy = maxy.max(p.y);
    }
    let span = (maxx - minx).max(maxy - miny).max(1.0);
    let (mx, my) = ((minx + maxx) / 2.0, (miny + maxy) / 2.0);
    let mut pts = points.to_vec();
    pts.push(Point::new(mx - 1.0e5 * span, my - span));
    pts.push(Point::new(mx, my + 1.0e5 * span));
    pts.push(Point::new(mx + 1.0e5 * span, my - span));

    let mut tris = vec![Triangle::new(&pts, n, n + 1, n + 2).expect("super triangle")];
    for i in 0..n {
        let p = pts[i];
        let (bad, keep): (Vec<Triangle>, Vec<Triangle>) = tris.into_iter().partition(|t| t.in_circumcircle(p));
        tris = keep;
        // boundary of the cavity = edges used by exactly one bad triangle
        let mut count: HashMap<(usize, usize), u32> = HashMap::new();
        for t in &bad {
            for k in 0..3 {
                let (a, b) = (t.v[k], t.v[(k + 1) % 3]);
                *count.entry((a.min(b), a.max(b))).or_default() += 1;
            }
        }
        let mut boundary: Vec<_> = count.into_iter().filter(|(_, c)| *c == 1).map(|(e, _)| e).collect();
        boundary.sort_unstable();
        for (a, b) in boundary {
            if let Some(t) = Triangle::new(&pts, a, b, i) {
                tris.push(t);
            }
        }
    }
    let mut edges = BTreeSet::new();
    for t in &tris {
        for k in 0..3 {
            let (a, b) = (t.v[k], t.v[(k + 1) % 3]);
            if a < n && b < n {
                edges.insert((a.min(b), a.max(b)));
            }
        }
    }
    edges.into_iter().collect()
}
