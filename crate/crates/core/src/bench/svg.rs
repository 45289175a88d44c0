//! Hand-written SVG line charts for sweep reports.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use super::CellSummary;

const PANEL_W: f64 = 360.0;
const PANEL_H: f64 = 240.0;
const MARGIN: f64 = 48.0;
const COLORS: [&str; 6] = ["#1b9e77", "#d95f02", "#7570b3", "#e7298a", "#66a61e", "#e6ab02"];

/// Speed, value and optional half-width of the shaded band.
type SeriesPoint = (f64, f64, Option<f64>);

struct Series<'a> {
    label: &'a str,
    points: Vec<SeriesPoint>,
}

fn fmt_cube(cube: f64) -> String {
    if cube.fract() == 0.0 {
        format!("{}", cube as i64)
    } else {
        cube.to_string().replace('.', "p")
    }
}

/// One SVG document per cube size: success rate, perception-failure rate and
/// mean grasp time (with a one-sigma band) against platform speed.
pub fn render(cells: &[CellSummary]) -> Vec<(String, String)> {
    let mut by_cube: BTreeMap<u64, Vec<&CellSummary>> = BTreeMap::new();
    for c in cells {
        by_cube.entry(c.cube.to_bits()).or_default().push(c);
    }
    let mut cubes: Vec<_> = by_cube.into_iter().collect();
    cubes.sort_by(|a, b| f64::from_bits(a.0).total_cmp(&f64::from_bits(b.0)));
    cubes
        .into_iter()
        .map(|(bits, cs)| {
            let cube = f64::from_bits(bits);
            (fmt_cube(cube), document(cube, &cs))
        })
        .collect()
}

fn series<'a>(cells: &[&'a CellSummary], y: impl Fn(&CellSummary) -> Option<(f64, Option<f64>)>) -> Vec<Series<'a>> {
    let mut order: Vec<&str> = Vec::new();
    let mut map: BTreeMap<&str, Vec<SeriesPoint>> = BTreeMap::new();
    for c in cells {
        if !order.contains(&c.perception.as_str()) {
            order.push(&c.perception);
        }
        if let Some((v, band)) = y(c) {
            map.entry(&c.perception).or_default().push((c.speed, v, band));
        }
    }
    order
        .into_iter()
        .map(|label| {
            let mut points = map.remove(label).unwrap_or_default();
            points.sort_by(|a, b| a.0.total_cmp(&b.0));
            Series { label, points }
        })
        .collect()
}

fn document(cube: f64, cells: &[&CellSummary]) -> String {
    let (x0, x1) = cells
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), c| (lo.min(c.speed), hi.max(c.speed)));
    let (x0, x1) = if x1 > x0 { (x0, x1) } else { (x0 - 1.0, x0 + 1.0) };

    let success = series(cells, |c| Some((c.success_rate, None)));
    let pf = series(cells, |c| Some((c.perception_failure_rate, None)));
    let time = series(cells, |c| c.mean_grasp_time.map(|m| (m, c.sigma_grasp_time)));
    let t_hi = time
        .iter()
        .flat_map(|s| s.points.iter().map(|p| p.1 + p.2.unwrap_or(0.0)))
        .fold(0.0f64, f64::max);
    let t_hi = if t_hi > 0.0 { (t_hi * 1.1).ceil() } else { 1.0 };

    let width = 3.0 * PANEL_W;
    let height = PANEL_H + 40.0;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="16" text-anchor="middle" font-size="14">{} mm cube</text>"#,
        width / 2.0,
        fmt_cube(cube).replace('p', ".")
    );
    panel(&mut s, 0.0, "success rate", (x0, x1), (0.0, 1.0), &success);
    panel(&mut s, PANEL_W, "perception failure rate", (x0, x1), (0.0, 1.0), &pf);
    panel(&mut s, 2.0 * PANEL_W, "mean grasp time (s)", (x0, x1), (0.0, t_hi), &time);
    s.push_str("</svg>\n");
    s
}

fn panel(s: &mut String, left: f64, title: &str, (x0, x1): (f64, f64), (y0, y1): (f64, f64), data: &[Series]) {
    let top = 24.0;
    let pl = left + MARGIN;
    let pr = left + PANEL_W - 12.0;
    let pt = top + 20.0;
    let pb = top + PANEL_H - 28.0;
    let sx = |x: f64| pl + (x - x0) / (x1 - x0) * (pr - pl);
    let sy = |y: f64| pb - (y - y0) / (y1 - y0) * (pb - pt);

    let _ = writeln!(s, r#"<g class="panel">"#);
    let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{title}</text>"#, (pl + pr) / 2.0, top + 10.0);
    let _ = writeln!(
        s,
        r#"<rect x="{pl:.1}" y="{pt:.1}" width="{:.1}" height="{:.1}" fill="none" stroke="black"/>"#,
        pr - pl,
        pb - pt
    );
    for i in 0..=4 {
        let y = y0 + (y1 - y0) * i as f64 / 4.0;
        let py = sy(y);
        let _ = writeln!(s, r##"<line x1="{pl:.1}" y1="{py:.1}" x2="{pr:.1}" y2="{py:.1}" stroke="#ddd"/>"##);
        let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"#, pl - 4.0, py + 4.0, trim(y));
    }
    let mut ticks: Vec<f64> = data.iter().flat_map(|d| d.points.iter().map(|p| p.0)).collect();
    ticks.sort_by(f64::total_cmp);
    ticks.dedup();
    for x in ticks {
        let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#, sx(x), pb + 14.0, trim(x));
    }
    let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">speed (mm/s)</text>"#, (pl + pr) / 2.0, pb + 26.0);

    for (i, d) in data.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let banded: Vec<_> = d.points.iter().filter_map(|p| p.2.map(|b| (p.0, p.1, b))).collect();
        if banded.len() >= 2 {
            let mut pts: Vec<String> = banded.iter().map(|p| format!("{:.1},{:.1}", sx(p.0), sy((p.1 + p.2).min(y1)))).collect();
            pts.extend(banded.iter().rev().map(|p| format!("{:.1},{:.1}", sx(p.0), sy((p.1 - p.2).max(y0)))));
            let _ = writeln!(s, r#"<polygon points="{}" fill="{color}" fill-opacity="0.15" stroke="none"/>"#, pts.join(" "));
        }
        let line: Vec<String> = d.points.iter().map(|p| format!("{:.1},{:.1}", sx(p.0), sy(p.1))).collect();
        if !line.is_empty() {
            let _ = writeln!(s, r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#, line.join(" "));
        }
        for p in &d.points {
            let _ = writeln!(s, r#"<circle cx="{:.1}" cy="{:.1}" r="3" fill="{color}"/>"#, sx(p.0), sy(p.1));
        }
        let ly = pt + 12.0 + 14.0 * i as f64;
        let _ = writeln!(s, r#"<text x="{:.1}" y="{ly:.1}" fill="{color}">{}</text>"#, pl + 6.0, d.label);
    }
    let _ = writeln!(s, "</g>");
}

fn trim(v: f64) -> String {
    let s = format!("{v:.2}");
    s.trim_end_matches('0').trim_end_matches('.').to_string()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cell(speed: f64, cube: f64, p: &str, sr: f64) -> CellSummary {
        CellSummary {
            speed,
            cube,
            perception: p.into(),
            n: 20,
            success_rate: sr,
            grasp_failure_rate: 1.0 - sr,
            perception_failure_rate: 0.0,
            timeout_rate: 0.0,
            mean_grasp_time: Some(7.0),
            sigma_grasp_time: Some(0.1),
        }
    }

    #[test]
    fn one_document_per_cube() {
        let cells = vec![
            cell(100.0, 30.0, "wrist", 0.5),
            cell(200.0, 30.0, "wrist", 0.3),
            cell(100.0, 40.0, "wrist", 0.7),
            cell(200.0, 40.0, "dual_hand", 0.9),
        ];
        let docs = render(&cells);
        assert_eq!(docs.len(), 2);
        assert_eq!(docs[0].0, "30");
        assert_eq!(docs[1].0, "40");
        for (_, d) in &docs {
            assert!(d.starts_with("<svg"));
            assert!(d.trim_end().ends_with("</svg>"));
            assert_eq!(d.matches("<g class=\"panel\">").count(), 3);
        }
        assert!(docs[0].1.contains("<polygon"));
    }
}
