//! Evaluation-only rewards. These score finished behaviour and drive the
//! scripted judge; no learner ever receives them as a training signal.

use std::f64::consts::PI;

/// Sonar range that keeps a vehicle centred in the 30 m pipe.
pub const SAFE_DISTANCE: f64 = 17.3;
const SAFE_BAND: f64 = 8.65;
pub const TARGET_SPACING: f64 = 18.0;
const SPACING_BAND: f64 = 15.0;

pub fn eval_reward_leader(d_l: f64) -> f64 {
    1.0 - (d_l - SAFE_DISTANCE).abs() / SAFE_BAND
}

/// Tracking term of the follower reward.
pub fn follower_tracking_reward(g_f: f64, a_f: f64) -> f64 {
    -(a_f.abs() * 3.0 / PI) + (1.0 - (g_f - TARGET_SPACING).abs() / SPACING_BAND).abs()
}

pub fn eval_reward_follower(g_f: f64, a_f: f64, d_f: f64) -> f64 {
    0.5 * follower_tracking_reward(g_f, a_f) + 0.5 * eval_reward_leader(d_f)
}
