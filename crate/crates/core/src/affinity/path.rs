//! Digital line between two pixels.
//!
//! Endpoints are put in row-major order before tracing, so the path between
//! `a` and `b` is the same pixel set as between `b` and `a`. Along the major
//! axis every step advances by one; the minor coordinate is the exact
//! rational position rounded to nearest, halves away from the start
//! (integer midpoint rule). Paths are
//! translation invariant, which lets callers precompute one template per
//! offset.

use crate::raster::Point;

/// Relative pixels of the line from `(0, 0)` to `(dr, dc)`, where the offset
/// is already in canonical order (`dr > 0`, or `dr == 0` and `dc >= 0`).
pub(crate) fn line_offsets(dr: isize, dc: isize) -> Vec<(isize, isize)> {
    debug_assert!(dr > 0 || (dr == 0 && dc >= 0), "offset ({dr}, {dc}) is not canonical");
    let (adr, adc) = (dr.unsigned_abs(), dc.unsigned_abs());
    let major = adr.max(adc);
    if major == 0 {
        return vec![(0, 0)];
    }
    let sign_c = dc.signum();
    (0..=major)
        .map(|t| {
            if adr >= adc {
                let minor = (2 * t * adc + adr) / (2 * adr);
                (t as isize, sign_c * minor as isize)
            } else {
                let minor = (2 * t * adr + adc) / (2 * adc);
                (minor as isize, sign_c * t as isize)
            }
        })
        .collect()
}

/// Orders two pixels row-major.
pub fn canonical(a: Point, b: Point) -> (Point, Point) {
    if a <= b {
        (a, b)
    } else {
        (b, a)
    }
}

/// 8-connected digital line from the row-major-first endpoint to the other,
/// both endpoints included.
pub fn path_pixels(a: Point, b: Point) -> Vec<Point> {
    let (p, q) = canonical(a, b);
    let dr = q.row as isize - p.row as isize;
    let dc = q.col as isize - p.col as isize;
    line_offsets(dr, dc)
        .into_iter()
        .map(|(r, c)| Point::new((p.row as isize + r) as usize, (p.col as isize + c) as usize))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pts(v: &[(usize, usize)]) -> Vec<Point> {
        v.iter().map(|&p| p.into()).collect()
    }

    #[test]
    fn examples() {
        let a = Point::new(3, 3);
        assert_eq!(path_pixels(a, a), vec![a]);
        assert_eq!(
            path_pixels(Point::new(0, 0), Point::new(0, 3)),
            pts(&[(0, 0), (0, 1), (0, 2), (0, 3)])
        );
        assert_eq!(
            path_pixels(Point::new(0, 0), Point::new(2, 2)),
            pts(&[(0, 0), (1, 1), (2, 2)])
        );
    }

    /// Independent digital-line oracle: sample the segment at every
    /// major-axis step and round the minor coordinate half-up in floating
    /// point.
    fn oracle(a: Point, b: Point) -> Vec<Point> {
        let (p, q) = if (a.row, a.col) <= (b.row, b.col) {
            (a, b)
        } else {
            (b, a)
        };
        let (r0, c0) = (p.row as f64, p.col as f64);
        let (dr, dc) = (q.row as f64 - r0, q.col as f64 - c0);
        let n = dr.abs().max(dc.abs()) as usize;
        if n == 0 {
            return vec![p];
        }
        (0..=n)
            .map(|t| {
                let half_up = |x: f64| (x.abs() + 0.5).floor() * x.signum();
                let at = |d: f64| d * t as f64 / n as f64;
                Point::new((r0 + half_up(at(dr))) as usize, (c0 + half_up(at(dc))) as usize)
            })
            .collect()
    }

    #[test]
    fn shallow_and_steep_lines_match_oracle() {
        for &(a, b) in &[
            ((0, 0), (1, 2)),
            ((0, 5), (2, 0)),
            ((4, 1), (0, 2)),
            ((2, 2), (7, 0)),
            ((0, 0), (3, 8)),
        ] {
            assert_eq!(
                path_pixels(a.into(), b.into()),
                oracle(a.into(), b.into()),
                "{a:?} -> {b:?}"
            );
        }
    }

    proptest! {
        #[test]
        fn path_invariants(ar in 0usize..30, ac in 0usize..30, br in 0usize..30, bc in 0usize..30) {
            let (a, b) = (Point::new(ar, ac), Point::new(br, bc));
            let path = path_pixels(a, b);
            prop_assert_eq!(&path, &oracle(a, b));
            let (p, q) = canonical(a, b);
            prop_assert_eq!(path[0], p);
            prop_assert_eq!(*path.last().unwrap(), q);
            prop_assert_eq!(path.len(), ar.abs_diff(br).max(ac.abs_diff(bc)) + 1);
            for w in path.windows(2) {
                prop_assert!(w[0].row.abs_diff(w[1].row) <= 1 && w[0].col.abs_diff(w[1].col) <= 1);
                prop_assert_ne!(w[0], w[1]);
            }
            let mut fwd = path.clone();
            let mut rev = path_pixels(b, a);
            fwd.sort();
            rev.sort();
            prop_assert_eq!(fwd, rev);
        }
    }
}
