//! Scanline fill of convex polygons and thin line drawing.
//!
//! A pixel `(x, y)` belongs to a polygon when its center `(x + 0.5, y + 0.5)`
//! falls in the half-open span `[left, right)` of the polygon's scanline at that
//! height, where a scanline crosses an edge iff `min(y_a, y_b) <= yc < max(y_a, y_b)`.

/// One filled run `[x0, x1)` on row `y`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Span {
    pub y: u32,
    pub x0: u32,
    pub x1: u32,
}

/// Spans covering a convex polygon, clipped to a `width × height` image.
pub fn convex_spans(poly: &[[f64; 2]], width: u32, height: u32) -> Vec<Span> {
    let mut spans = Vec::new();
    if poly.len() < 3 {
        return spans;
    }
    let ymin = poly.iter().map(|p| p[1]).fold(f64::INFINITY, f64::min);
    let ymax = poly.iter().map(|p| p[1]).fold(f64::NEG_INFINITY, f64::max);
    let row_lo = (ymin - 0.5).ceil().max(0.0);
    let row_hi = (ymax - 0.5).ceil().min(f64::from(height));
    if !(row_lo < row_hi) {
        return spans;
    }
    for y in row_lo as u32..row_hi as u32 {
        let yc = f64::from(y) + 0.5;
        let mut left = f64::INFINITY;
        let mut right = f64::NEG_INFINITY;
        for k in 0..poly.len() {
            let a = poly[k];
            let b = poly[(k + 1) % poly.len()];
            let (lo, hi) = if a[1] < b[1] { (a, b) } else { (b, a) };
            if lo[1] <= yc && yc < hi[1] {
                let x = lo[0] + (yc - lo[1]) * (hi[0] - lo[0]) / (hi[1] - lo[1]);
                left = left.min(x);
                right = right.max(x);
            }
        }
        if !(left < right) {
            continue;
        }
        // x + 0.5 >= left  and  x + 0.5 < right
        let x0 = (left - 0.5).ceil().max(0.0);
        let x1 = (right - 0.5).ceil().min(f64::from(width));
        if x0 < x1 {
            spans.push(Span {
                y,
                x0: x0 as u32,
                x1: x1 as u32,
            });
        }
    }
    spans
}

/// Pixels of a 1-px line from `a` to `b`, clipped to the image. DDA stepping along the major axis.
pub fn line_pixels(a: [f64; 2], b: [f64; 2], width: u32, height: u32) -> Vec<(u32, u32)> {
    let dx = b[0] - a[0];
    let dy = b[1] - a[1];
    let steps = dx.abs().max(dy.abs()).ceil().min(4096.0) as usize;
    let mut out = Vec::with_capacity(steps + 1);
    for i in 0..=steps {
        let t = if steps == 0 { 0.0 } else { i as f64 / steps as f64 };
        let x = (a[0] + dx * t).floor();
        let y = (a[1] + dy * t).floor();
        if x >= 0.0 && y >= 0.0 && x < f64::from(width) && y < f64::from(height) {
            let p = (x as u32, y as u32);
            if out.last() != Some(&p) {
                out.push(p);
            }
        }
    }
    out
}

/// Clip segment `a→b` to the rectangle `[lo, hi]` (Liang–Barsky). Keeps line rasterization bounded.
pub fn clip_segment(a: [f64; 2], b: [f64; 2], lo: [f64; 2], hi: [f64; 2]) -> Option<([f64; 2], [f64; 2])> {
    let d = [b[0] - a[0], b[1] - a[1]];
    let (mut t0, mut t1) = (0.0f64, 1.0f64);
    for k in 0..2 {
        for (p, q) in [(-d[k], a[k] - lo[k]), (d[k], hi[k] - a[k])] {
            if p == 0.0 {
                if q < 0.0 {
                    return None;
                }
            } else {
                let r = q / p;
                if p < 0.0 {
                    t0 = t0.max(r);
                } else {
                    t1 = t1.min(r);
                }
            }
        }
    }
    (t0 <= t1).then(|| {
        (
            [a[0] + t0 * d[0], a[1] + t0 * d[1]],
            [a[0] + t1 * d[0], a[1] + t1 * d[1]],
        )
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn area(spans: &[Span]) -> u64 {
        spans.iter().map(|s| u64::from(s.x1 - s.x0)).sum()
    }

    #[test]
    fn axis_aligned_square() {
        let sq = [[2.0, 2.0], [6.0, 2.0], [6.0, 6.0], [2.0, 6.0]];
        let s = convex_spans(&sq, 10, 10);
        assert_eq!(area(&s), 16);
        assert_eq!(s[0], Span { y: 2, x0: 2, x1: 6 });
    }

    #[test]
    fn adjacent_polygons_do_not_overlap() {
        let a = [[0.0, 0.0], [5.0, 0.0], [5.0, 10.0], [0.0, 10.0]];
        let b = [[5.0, 0.0], [10.0, 0.0], [10.0, 10.0], [5.0, 10.0]];
        assert_eq!(area(&convex_spans(&a, 10, 10)) + area(&convex_spans(&b, 10, 10)), 100);
    }

    #[test]
    fn clipped_to_image() {
        let big = [[-50.0, -50.0], [50.0, -50.0], [50.0, 50.0], [-50.0, 50.0]];
        assert_eq!(area(&convex_spans(&big, 8, 4)), 32);
    }

    #[test]
    fn segment_clipping() {
        let (a, b) = clip_segment([-10.0, 5.0], [20.0, 5.0], [0.0, 0.0], [10.0, 10.0]).unwrap();
        assert_eq!(a, [0.0, 5.0]);
        assert_eq!(b, [10.0, 5.0]);
        assert!(clip_segment([-10.0, -5.0], [-1.0, -1.0], [0.0, 0.0], [10.0, 10.0]).is_none());
    }
}
