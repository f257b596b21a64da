//! Forward-looking sonar: 600 beams over ±60°, six 20° sectors.

use super::corridor::Corridor;
use super::geometry::Vec2;
use super::{Pose, WorldError};
use serde::{Deserialize, Serialize};
use std::f64::consts::FRAC_PI_3;

pub const SECTORS: usize = 6;
pub const BEAMS: usize = 600;
pub const BEAMS_PER_SECTOR: usize = BEAMS / SECTORS;
pub const MAX_RANGE: f64 = 33.0;
pub const HALF_FOV: f64 = FRAC_PI_3;

/// Per-sector minimum ranges. Sector 0 is the rightmost (most clockwise)
/// sector, sector 5 the leftmost.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SonarScan {
    pub sector_min: [f64; SECTORS],
}

impl SonarScan {
    pub fn open(max_range: f64) -> Self {
        Self { sector_min: [max_range; SECTORS] }
    }

    /// Shortest range over all sectors (the vehicle's distance to an obstacle).
    pub fn nearest(&self) -> f64 {
        self.sector_min.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn right(&self) -> f64 {
        self.sector_min[0]
    }

    pub fn left(&self) -> f64 {
        self.sector_min[SECTORS - 1]
    }
}

/// Heading-relative angle of beam `k`; beams span [-60°, +60°] inclusive.
pub fn beam_angle(k: usize) -> f64 {
    -HALF_FOV + (2.0 * HALF_FOV) * k as f64 / (BEAMS - 1) as f64
}

/// Scans with the standard 33 m range. Fails if the pose is not in free space.
pub fn raycast_sonar(corridor: &Corridor, pose: &Pose) -> Result<SonarScan, WorldError> {
    raycast_sonar_with_range(corridor, pose, MAX_RANGE)
}

pub fn raycast_sonar_with_range(
    corridor: &Corridor,
    pose: &Pose,
    max_range: f64,
) -> Result<SonarScan, WorldError> {
    let origin = pose.position();
    if !corridor.is_free(origin) {
        return Err(WorldError::OutsideFreeSpace { x: pose.x, y: pose.y });
    }
    Ok(scan_unchecked(corridor, pose, max_range))
}

/// Casts every beam without the free-space check.
pub(crate) fn scan_unchecked(corridor: &Corridor, pose: &Pose, max_range: f64) -> SonarScan {
    let origin = pose.position();
    let nearby: Vec<_> = corridor
        .surfaces()
        .iter()
        .filter(|s| s.distance_to(origin) <= max_range)
        .collect();
    let mut scan = SonarScan::open(max_range);
    for k in 0..BEAMS {
        let dir = Vec2::from_angle(pose.heading + beam_angle(k));
        let mut range = max_range;
        for seg in &nearby {
            if let Some(t) = seg.ray_hit(origin, dir) {
                range = range.min(t);
            }
        }
        let sector = &mut scan.sector_min[k / BEAMS_PER_SECTOR];
        *sector = sector.min(range);
    }
    scan
}

#[cfg(test)]
mod tests {
    use super::*;

    fn straight() -> Corridor {
        Corridor::new(
            vec![Vec2::new(0.0, 0.0), Vec2::new(200.0, 0.0)],
            30.0,
            vec![],
            150.0,
        )
        .unwrap()
    }

    #[test]
    fn beams_cover_field_of_view() {
        assert_eq!(beam_angle(0), -HALF_FOV);
        assert!((beam_angle(BEAMS - 1) - HALF_FOV).abs() < 1e-15);
    }

    #[test]
    fn centered_pose_sees_walls_at_outer_sectors() {
        let scan = raycast_sonar(&straight(), &Pose::new(50.0, 0.0, 0.0)).unwrap();
        let expected = 15.0 / HALF_FOV.sin();
        assert!((scan.right() - expected).abs() < 0.1);
        assert!((scan.left() - expected).abs() < 0.1);
        assert_eq!(scan.sector_min[2], MAX_RANGE);
        assert_eq!(scan.sector_min[3], MAX_RANGE);
    }

    #[test]
    fn outside_free_space_is_an_error() {
        let err = raycast_sonar(&straight(), &Pose::new(50.0, 20.0, 0.0));
        assert!(matches!(err, Err(WorldError::OutsideFreeSpace { .. })));
    }
}
