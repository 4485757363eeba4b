//! Canonical-axis Mollweide projection and a minimal SVG scatter writer.

use std::f64::consts::{FRAC_PI_2, PI, SQRT_2};
use std::fmt::Write;

use so3diff::so3::canonical_axis;
use so3diff::Rotation;

/// One projected rotation. Angles in radians.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PlotPoint {
    pub longitude: f64,
    pub latitude: f64,
    pub tilt: f64,
    /// Mollweide coordinates: `x` in `[-2 sqrt2, 2 sqrt2]`, `y` in `[-sqrt2, sqrt2]`.
    pub x: f64,
    pub y: f64,
}

/// Auxiliary angle `t` solving `2t + sin 2t = pi sin(lat)`.
fn mollweide_theta(lat: f64) -> f64 {
    if (lat.abs() - FRAC_PI_2).abs() < 1e-12 {
        return lat.signum() * FRAC_PI_2;
    }
    let target = PI * lat.sin();
    let mut t = lat;
    for _ in 0..50 {
        let f = 2.0 * t + (2.0 * t).sin() - target;
        let df = 2.0 + 2.0 * (2.0 * t).cos();
        if df.abs() < 1e-14 {
            break;
        }
        let step = f / df;
        t -= step;
        if step.abs() < 1e-13 {
            break;
        }
    }
    t
}

pub fn project(r: &Rotation) -> PlotPoint {
    let c = canonical_axis(r);
    let latitude = FRAC_PI_2 - c.polar;
    let t = mollweide_theta(latitude);
    PlotPoint {
        longitude: c.azimuth,
        latitude,
        tilt: c.tilt,
        x: 2.0 * SQRT_2 / PI * c.azimuth * t.cos(),
        y: SQRT_2 * t.sin(),
    }
}

pub fn to_csv(points: &[PlotPoint]) -> String {
    let mut s = String::from("longitude,latitude,tilt,x,y\n");
    for p in points {
        let _ = writeln!(
            s,
            "{},{},{},{},{}",
            p.longitude, p.latitude, p.tilt, p.x, p.y
        );
    }
    s
}

/// Colour for a tilt angle: hue runs once around the colour wheel over `[-pi, pi)`.
fn tilt_colour(tilt: f64) -> String {
    let h = ((tilt + PI) / (2.0 * PI)).rem_euclid(1.0) * 6.0;
    let x = 1.0 - (h % 2.0 - 1.0).abs();
    let (r, g, b) = match h as u32 {
        0 => (1.0, x, 0.0),
        1 => (x, 1.0, 0.0),
        2 => (0.0, 1.0, x),
        3 => (0.0, x, 1.0),
        4 => (x, 0.0, 1.0),
        _ => (1.0, 0.0, x),
    };
    let c = |v: f64| (v * 220.0).round() as u8;
    format!("#{:02x}{:02x}{:02x}", c(r), c(g), c(b))
}

pub fn to_svg(points: &[PlotPoint]) -> String {
    let (w, h) = (800.0, 400.0);
    let sx = w / (4.0 * SQRT_2) * 0.95;
    let sy = h / (2.0 * SQRT_2) * 0.95;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#
    );
    let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<ellipse cx="{}" cy="{}" rx="{:.2}" ry="{:.2}" fill="none" stroke="black" stroke-width="1"/>"#,
        w / 2.0,
        h / 2.0,
        2.0 * SQRT_2 * sx,
        SQRT_2 * sy
    );
    for p in points {
        let _ = writeln!(
            s,
            r#"<circle cx="{:.2}" cy="{:.2}" r="1.2" fill="{}" fill-opacity="0.6"/>"#,
            w / 2.0 + p.x * sx,
            h / 2.0 - p.y * sy,
            tilt_colour(p.tilt)
        );
    }
    s.push_str("</svg>\n");
    s
}
