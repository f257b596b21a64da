//! Static SVG rendering of a pipe and vehicle paths.
//!
//! Output depends only on the inputs: coordinates are printed with fixed
//! precision and elements are emitted in a fixed order.

use crate::world::{Pose, Task, Vec2};
use serde::{Deserialize, Serialize};
use std::fmt::Write;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathLayer {
    pub label: String,
    pub color: String,
    pub points: Vec<[f64; 2]>,
}

impl PathLayer {
    pub fn new(label: impl Into<String>, color: impl Into<String>, points: Vec<[f64; 2]>) -> Self {
        Self { label: label.into(), color: color.into(), points }
    }
}

/// Leader and follower layers from a pose path.
pub fn layers_from_path(path: &[(Pose, Pose)], prefix: &str) -> Vec<PathLayer> {
    let leader = path.iter().map(|(l, _)| [l.x, l.y]).collect();
    let follower = path.iter().map(|(_, f)| [f.x, f.y]).collect();
    vec![
        PathLayer::new(format!("{prefix}leader"), "#d62728", leader),
        PathLayer::new(format!("{prefix}follower"), "#1f77b4", follower),
    ]
}

const MARGIN: f64 = 10.0;
const SCALE: f64 = 4.0;

pub fn render_svg(task: &Task, layers: &[PathLayer]) -> String {
    let c = &task.corridor;
    let mut pts: Vec<Vec2> = c.left_wall().iter().chain(c.right_wall()).copied().collect();
    for l in layers {
        pts.extend(l.points.iter().map(|p| Vec2::new(p[0], p[1])));
    }
    let (mut min_x, mut min_y, mut max_x, mut max_y) = (f64::MAX, f64::MAX, f64::MIN, f64::MIN);
    for p in &pts {
        min_x = min_x.min(p.x);
        min_y = min_y.min(p.y);
        max_x = max_x.max(p.x);
        max_y = max_y.max(p.y);
    }
    let width = (max_x - min_x + 2.0 * MARGIN) * SCALE;
    let height = (max_y - min_y + 2.0 * MARGIN) * SCALE;
    // world y points up, SVG y points down
    let tx = |x: f64| (x - min_x + MARGIN) * SCALE;
    let ty = |y: f64| (max_y - y + MARGIN) * SCALE;
    let poly = |points: &mut dyn Iterator<Item = (f64, f64)>| {
        points.map(|(x, y)| format!("{:.2},{:.2}", tx(x), ty(y))).collect::<Vec<_>>().join(" ")
    };

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0}" height="{height:.0}" viewBox="0 0 {width:.2} {height:.2}">"#
    );
    let _ = writeln!(svg, r##"<rect width="100%" height="100%" fill="#ffffff"/>"##);
    let _ = writeln!(svg, r#"<title>{}</title>"#, escape(&task.id));
    for (name, wall) in [("left-wall", c.left_wall()), ("right-wall", c.right_wall())] {
        let _ = writeln!(
            svg,
            r##"<polyline class="{name}" points="{}" fill="none" stroke="#333333" stroke-width="2"/>"##,
            poly(&mut wall.iter().map(|p| (p.x, p.y)))
        );
    }
    let _ = writeln!(
        svg,
        r##"<polyline class="centerline" points="{}" fill="none" stroke="#999999" stroke-width="1" stroke-dasharray="6 4"/>"##,
        poly(&mut c.centerline().iter().map(|p| (p.x, p.y)))
    );
    for corners in c.obstacle_corners() {
        let _ = writeln!(
            svg,
            r##"<polygon class="obstacle" points="{}" fill="#8c564b" stroke="#333333"/>"##,
            poly(&mut corners.iter().map(|p| (p.x, p.y)))
        );
    }
    let (goal, dir) = c.point_at(c.goal_progress());
    let half = dir.perp() * (c.width() / 2.0);
    let (a, b) = (goal + half, goal - half);
    let _ = writeln!(
        svg,
        r##"<line class="goal" x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="#2ca02c" stroke-width="3"/>"##,
        tx(a.x),
        ty(a.y),
        tx(b.x),
        ty(b.y)
    );
    for l in layers {
        let _ = writeln!(
            svg,
            r#"<polyline class="path" data-label="{}" points="{}" fill="none" stroke="{}" stroke-width="2"/>"#,
            escape(&l.label),
            poly(&mut l.points.iter().map(|p| (p[0], p[1]))),
            escape(&l.color)
        );
    }
    svg.push_str("</svg>\n");
    svg
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}
