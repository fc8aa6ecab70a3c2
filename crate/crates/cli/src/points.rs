//! Point sets as CSV: header `row,col` or `row,col,score`, one point per
//! line, integer coordinates.

use std::collections::HashMap;
use std::io::Write;
use std::path::Path;

use anyhow::{anyhow, bail, Context};
use nucseg_core::{Point, PointSet};

fn parse_coord(field: &str, name: &str, line: u64) -> anyhow::Result<usize> {
    field
        .trim()
        .parse::<usize>()
        .map_err(|_| anyhow!("line {line}: {name} {field:?} is not a non-negative integer"))
}

/// Parses CSV text. With `bounds = Some((h, w))`, out-of-range points are
/// rejected.
pub fn parse(text: &str, bounds: Option<(usize, usize)>) -> anyhow::Result<PointSet> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
    let header: Vec<String> = rdr
        .headers()
        .context("line 1: unreadable header")?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    let with_score = match header.iter().map(String::as_str).collect::<Vec<_>>()[..] {
        ["row", "col"] => false,
        ["row", "col", "score"] => true,
        _ => bail!(
            "line 1: header must be \"row,col\" or \"row,col,score\", found {:?}",
            header.join(",")
        ),
    };
    let mut points = Vec::new();
    let mut scores = Vec::new();
    let mut seen: HashMap<Point, u64> = HashMap::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            anyhow!("line {line}: {e}")
        })?;
        let line = rec.position().map_or(0, |p| p.line());
        let row = parse_coord(&rec[0], "row", line)?;
        let col = parse_coord(&rec[1], "col", line)?;
        if let Some((h, w)) = bounds {
            if row >= h || col >= w {
                bail!("line {line}: point ({row}, {col}) is outside the {h}x{w} raster");
            }
        }
        let p = Point::new(row, col);
        if let Some(first) = seen.insert(p, line) {
            bail!("line {line}: point ({row}, {col}) duplicates line {first}");
        }
        points.push(p);
        if with_score {
            let s: f32 = rec[2]
                .trim()
                .parse()
                .map_err(|_| anyhow!("line {line}: score {:?} is not a number", &rec[2]))?;
            if !s.is_finite() {
                bail!("line {line}: score must be finite");
            }
            scores.push(s);
        }
    }
    let set = if with_score {
        PointSet::with_scores(points, scores)
    } else {
        PointSet::new(points)
    };
    Ok(set.expect("duplicates rejected above"))
}

pub fn read(path: &Path, bounds: Option<(usize, usize)>) -> anyhow::Result<PointSet> {
    let text = std::fs::read_to_string(path).with_context(|| path.display().to_string())?;
    parse(&text, bounds).with_context(|| path.display().to_string())
}

pub fn to_csv(points: &PointSet) -> String {
    let mut out = String::new();
    match points.scores() {
        Some(scores) => {
            out.push_str("row,col,score\n");
            for (p, s) in points.iter().zip(scores) {
                out.push_str(&format!("{},{},{}\n", p.row, p.col, s));
            }
        }
        None => {
            out.push_str("row,col\n");
            for p in points.iter() {
                out.push_str(&format!("{},{}\n", p.row, p.col));
            }
        }
    }
    out
}

/// Writes to `path`, or to stdout when `path` is `None`.
pub fn write(path: Option<&Path>, points: &PointSet) -> anyhow::Result<()> {
    let text = to_csv(points);
    match path {
        Some(p) => std::fs::write(p, text).with_context(|| p.display().to_string()),
        None => Ok(std::io::stdout().lock().write_all(text.as_bytes())?),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_with_scores() {
        let set = PointSet::with_scores(vec![Point::new(3, 1), Point::new(0, 7)], vec![0.25, 1.0 / 3.0]).unwrap();
        let back = parse(&to_csv(&set), Some((4, 8))).unwrap();
        assert_eq!(back, set);
    }

    #[test]
    fn errors_carry_line_numbers() {
        let e = parse("row,col\n1,2\n5,9\n", Some((4, 4))).unwrap_err().to_string();
        assert!(e.starts_with("line 3:"), "{e}");
        let e = parse("row,col\n1,2\n0,0\n1,2\n", None).unwrap_err().to_string();
        assert_eq!(e, "line 4: point (1, 2) duplicates line 2");
        let e = parse("row,col\n1,-2\n", None).unwrap_err().to_string();
        assert!(e.starts_with("line 2:"), "{e}");
        let e = parse("x,y\n", None).unwrap_err().to_string();
        assert!(e.starts_with("line 1:"), "{e}");
    }
}
