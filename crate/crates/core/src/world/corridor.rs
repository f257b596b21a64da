//! Pipe geometry: a polyline centerline with parallel walls and rectangular
//! obstacles attached to the walls.

use super::geometry::{point_in_polygon, Segment, Vec2};
use super::WorldError;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WallSide {
    Left,
    Right,
}

/// Rectangle flush against one wall, `offset` meters along the centerline.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Obstacle {
    pub length: f64,
    pub width: f64,
    pub side: WallSide,
    pub offset: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Corridor {
    centerline: Vec<Vec2>,
    width: f64,
    obstacles: Vec<Obstacle>,
    goal_progress: f64,
    cumulative: Vec<f64>,
    left_wall: Vec<Vec2>,
    right_wall: Vec<Vec2>,
    obstacle_corners: Vec<[Vec2; 4]>,
    surfaces: Vec<Segment>,
    free_polygon: Vec<Vec2>,
}

impl Corridor {
    pub fn new(
        centerline: Vec<Vec2>,
        width: f64,
        obstacles: Vec<Obstacle>,
        goal_progress: f64,
    ) -> Result<Self, WorldError> {
        let invalid = |field: &str, reason: String| WorldError::InvalidTask {
            field: field.to_string(),
            reason,
        };
        if !(width.is_finite() && width > 0.0) {
            return Err(invalid("width", format!("must be positive, got {width}")));
        }
        if centerline.len() < 2 {
            return Err(invalid(
                "centerline",
                format!("needs at least 2 waypoints, got {}", centerline.len()),
            ));
        }
        let mut cumulative = vec![0.0];
        for (i, pair) in centerline.windows(2).enumerate() {
            let len = (pair[1] - pair[0]).norm();
            if len.is_nan() || len <= 1e-9 || !len.is_finite() {
                return Err(invalid(
                    "centerline",
                    format!("waypoints {i} and {} coincide", i + 1),
                ));
            }
            cumulative.push(cumulative[i] + len);
        }
        let total = *cumulative.last().unwrap();
        if !(goal_progress.is_finite() && goal_progress > 0.0 && goal_progress <= total) {
            return Err(invalid(
                "goal_progress",
                format!("must lie in (0, {total}], got {goal_progress}"),
            ));
        }

        let half = width / 2.0;
        let left_wall = offset_polyline(&centerline, half);
        let right_wall = offset_polyline(&centerline, -half);

        let mut obstacle_corners = Vec::with_capacity(obstacles.len());
        for (k, obs) in obstacles.iter().enumerate() {
            let field = format!("obstacles[{k}]");
            if !(obs.length > 0.0 && obs.width > 0.0) {
                return Err(invalid(&field, "length and width must be positive".into()));
            }
            if obs.width >= width {
                return Err(invalid(&field, "obstacle would block the whole pipe".into()));
            }
            let seg = (0..centerline.len() - 1)
                .find(|&i| obs.offset >= cumulative[i] && obs.offset + obs.length <= cumulative[i + 1]);
            let Some(i) = seg else {
                return Err(invalid(
                    &field,
                    "must start and end on a single straight centerline segment".into(),
                ));
            };
            let dir = (centerline[i + 1] - centerline[i]).normalized();
            let normal = dir.perp();
            let start = centerline[i] + dir * (obs.offset - cumulative[i]);
            let end = start + dir * obs.length;
            let (outer, inner) = match obs.side {
                WallSide::Left => (half, half - obs.width),
                WallSide::Right => (-half, -half + obs.width),
            };
            obstacle_corners.push([
                start + normal * outer,
                end + normal * outer,
                end + normal * inner,
                start + normal * inner,
            ]);
        }

        let mut surfaces = Vec::new();
        for wall in [&left_wall, &right_wall] {
            surfaces.extend(wall.windows(2).map(|w| Segment::new(w[0], w[1])));
        }
        for corners in &obstacle_corners {
            for e in 0..4 {
                surfaces.push(Segment::new(corners[e], corners[(e + 1) % 4]));
            }
        }

        let mut free_polygon = left_wall.clone();
        free_polygon.extend(right_wall.iter().rev());

        Ok(Self {
            centerline,
            width,
            obstacles,
            goal_progress,
            cumulative,
            left_wall,
            right_wall,
            obstacle_corners,
            surfaces,
            free_polygon,
        })
    }

    pub fn centerline(&self) -> &[Vec2] {
        &self.centerline
    }

    pub fn width(&self) -> f64 {
        self.width
    }

    pub fn obstacles(&self) -> &[Obstacle] {
        &self.obstacles
    }

    pub fn goal_progress(&self) -> f64 {
        self.goal_progress
    }

    pub fn total_length(&self) -> f64 {
        *self.cumulative.last().unwrap()
    }

    pub fn left_wall(&self) -> &[Vec2] {
        &self.left_wall
    }

    pub fn right_wall(&self) -> &[Vec2] {
        &self.right_wall
    }

    pub fn obstacle_corners(&self) -> &[[Vec2; 4]] {
        &self.obstacle_corners
    }

    /// Every segment the sonar can hit.
    pub fn surfaces(&self) -> &[Segment] {
        &self.surfaces
    }

    /// Inside the walls and outside every obstacle.
    pub fn is_free(&self, p: Vec2) -> bool {
        point_in_polygon(p, &self.free_polygon)
            && !self.obstacle_corners.iter().any(|c| point_in_polygon(p, c))
    }

    /// Arc length of the closest centerline point.
    pub fn progress(&self, p: Vec2) -> f64 {
        let mut best = (f64::INFINITY, 0.0);
        for (i, w) in self.centerline.windows(2).enumerate() {
            let edge = w[1] - w[0];
            let len = edge.norm();
            let t = ((p - w[0]).dot(edge) / (len * len)).clamp(0.0, 1.0);
            let dist = (p - (w[0] + edge * t)).norm();
            if dist < best.0 {
                best = (dist, self.cumulative[i] + t * len);
            }
        }
        best.1
    }

    /// Point and unit direction of the centerline at arc length `s`.
    pub fn point_at(&self, s: f64) -> (Vec2, Vec2) {
        let last = self.centerline.len() - 2;
        let i = (0..=last)
            .find(|&i| s <= self.cumulative[i + 1])
            .unwrap_or(last);
        let dir = (self.centerline[i + 1] - self.centerline[i]).normalized();
        (self.centerline[i] + dir * (s - self.cumulative[i]), dir)
    }
}

/// Offsets a polyline sideways by `dist` (positive = left) with mitred joins.
fn offset_polyline(points: &[Vec2], dist: f64) -> Vec<Vec2> {
    let normals: Vec<Vec2> = points
        .windows(2)
        .map(|w| (w[1] - w[0]).normalized().perp())
        .collect();
    let mut out = Vec::with_capacity(points.len());
    out.push(points[0] + normals[0] * dist);
    for i in 1..points.len() - 1 {
        let (n0, n1) = (normals[i - 1], normals[i]);
        let miter = (n0 + n1) * (dist / (1.0 + n0.dot(n1)));
        out.push(points[i] + miter);
    }
    out.push(points[points.len() - 1] + normals[normals.len() - 1] * dist);
    out
}
