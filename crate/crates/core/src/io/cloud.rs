//! Oriented point clouds as comma-separated text.
//!
//! One point per line: `x,y,z,ax,ay,az`. Lines starting with `#` and blank
//! lines are ignored; an optional first non-comment line naming the columns
//! is skipped.

use crate::data::OrientedPointCloud;
use crate::error::{Error, Result};

pub const CLOUD_HEADER: &str = "x,y,z,ax,ay,az";

pub fn write_cloud(cloud: &OrientedPointCloud) -> String {
    let mut s = String::from(CLOUD_HEADER);
    s.push('\n');
    for (p, a) in cloud.positions.iter().zip(&cloud.axes) {
        s.push_str(&format!(
            "{},{},{},{},{},{}\n",
            p[0], p[1], p[2], a[0], a[1], a[2]
        ));
    }
    s
}

pub fn read_cloud(text: &str) -> Result<OrientedPointCloud> {
    let mut positions = Vec::new();
    let mut axes = Vec::new();
    let mut offset = 0u64;
    let mut first = true;
    for raw in text.split_inclusive('\n') {
        let at = offset;
        offset += raw.len() as u64;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if std::mem::take(&mut first) && line.replace(' ', "") == CLOUD_HEADER {
            continue;
        }
        let bad = |msg: String| Error::Format { offset: at, msg };
        let v = line
            .split(',')
            .map(|f| f.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| bad(format!("bad number: {e}")))?;
        if v.len() != 6 {
            return Err(bad(format!("expected 6 columns, got {}", v.len())));
        }
        let n = (v[3] * v[3] + v[4] * v[4] + v[5] * v[5]).sqrt();
        if (n - 1.0).abs() > 1e-9 {
            return Err(bad(format!("axis norm {n} is not 1")));
        }
        positions.push([v[0], v[1], v[2]]);
        axes.push([v[3], v[4], v[5]]);
    }
    OrientedPointCloud::new(positions, axes)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_and_errors() {
        let c = OrientedPointCloud::new(
            vec![[0.1, 2.0, -3.5], [1e-9, 0.0, 7.0]],
            vec![[0.0, 0.0, 1.0], [0.6, 0.8, 0.0]],
        )
        .unwrap();
        let text = write_cloud(&c);
        assert_eq!(read_cloud(&text).unwrap(), c);
        assert_eq!(write_cloud(&read_cloud(&text).unwrap()), text);

        let bad = "x,y,z,ax,ay,az\n0,0,0,0,0,1\n0,0,0,1,1,0\n";
        match read_cloud(bad) {
            Err(Error::Format { offset, .. }) => assert_eq!(offset, 27),
            other => panic!("{other:?}"),
        }
        assert!(read_cloud("1,2,3\n").is_err());
    }
}
