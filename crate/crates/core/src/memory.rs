//! Motion-gated memory of tracking hidden states.
//!
//! A new hidden state is kept only when the camera has moved far enough from
//! the most recently stored view, measured separately in rotation and in
//! translation. The buffer is bounded and evicts its oldest slot when full.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::geometry::{matrix_to_euler, PoseSE3};

/// How the rotation and translation tests combine.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Combine {
    /// Either distance reaching its threshold triggers storage.
    #[default]
    Or,
    /// Both distances must reach their thresholds.
    And,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MemoryPolicy {
    /// Radians.
    pub theta_rot: f64,
    /// Meters.
    pub theta_trans: f64,
    /// Maximum number of slots.
    pub capacity: usize,
    #[serde(default)]
    pub combine: Combine,
}

impl MemoryPolicy {
    pub fn new(theta_rot: f64, theta_trans: f64, capacity: usize) -> Result<Self> {
        let p = Self {
            theta_rot,
            theta_trans,
            capacity,
            combine: Combine::Or,
        };
        p.validate()?;
        Ok(p)
    }

    /// Outdoor driving thresholds: 0.005 rad, 0.6 m, 11 slots.
    pub fn kitti() -> Self {
        Self::new(0.005, 0.6, 11).expect("valid constants")
    }

    /// Handheld indoor thresholds: 0.01 rad, 0.01 m, 11 slots.
    pub fn tum() -> Self {
        Self::new(0.01, 0.01, 11).expect("valid constants")
    }

    /// Store every observation (zero thresholds).
    pub fn store_all(capacity: usize) -> Self {
        Self::new(0.0, 0.0, capacity).expect("valid constants")
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.theta_rot >= 0.0) || !(self.theta_trans >= 0.0) {
            return Err(invalid("memory thresholds must be non-negative"));
        }
        if self.capacity == 0 {
            return Err(invalid("memory capacity must be at least 1"));
        }
        Ok(())
    }
}

/// Rotational and translational distance between two anchors: the norm of
/// the Euler vector of `last⁻¹·candidate` and the norm of the translation
/// difference. Non-finite poses give NaN distances, which never trigger
/// storage.
pub fn motion_distance(candidate: &PoseSE3, last: &PoseSE3) -> (f64, f64) {
    let relative = last.rotation().transpose() * candidate.rotation();
    let rot = matrix_to_euler(&relative).map_or(f64::NAN, |e| e.norm());
    let trans = (candidate.translation() - last.translation()).norm();
    (rot, trans)
}

pub fn should_store(candidate: &PoseSE3, last: &PoseSE3, policy: &MemoryPolicy) -> bool {
    let (rot, trans) = motion_distance(candidate, last);
    let rot_ok = rot >= policy.theta_rot;
    let trans_ok = trans >= policy.theta_trans;
    match policy.combine {
        Combine::Or => rot_ok || trans_ok,
        Combine::And => rot_ok && trans_ok,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Slot<T> {
    pub state: T,
    /// Integrated tracking pose at storage time.
    pub anchor: PoseSE3,
    pub frame: usize,
}

/// Bounded FIFO of selected hidden states.
#[derive(Debug, Clone)]
pub struct MemoryBuffer<T> {
    policy: MemoryPolicy,
    slots: VecDeque<Slot<T>>,
    last_observed: Option<usize>,
}

impl<T: Clone> MemoryBuffer<T> {
    pub fn new(policy: MemoryPolicy) -> Result<Self> {
        policy.validate()?;
        Ok(Self {
            policy,
            slots: VecDeque::with_capacity(policy.capacity),
            last_observed: None,
        })
    }

    pub fn policy(&self) -> &MemoryPolicy {
        &self.policy
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    pub fn frames(&self) -> Vec<usize> {
        self.slots.iter().map(|s| s.frame).collect()
    }

    /// Offer a hidden state; returns whether it was stored.
    ///
    /// The first observation is always kept. Frames must arrive in strictly
    /// increasing order.
    pub fn observe(&mut self, state: T, pose: PoseSE3, frame: usize) -> Result<bool> {
        if let Some(last) = self.last_observed {
            if frame <= last {
                return Err(Error::OutOfOrder { frame, last });
            }
        }
        self.last_observed = Some(frame);
        let store = match self.slots.back() {
            None => true,
            Some(latest) => should_store(&pose, &latest.anchor, &self.policy),
        };
        if store {
            if self.slots.len() == self.policy.capacity {
                self.slots.pop_front();
            }
            self.slots.push_back(Slot {
                state,
                anchor: pose,
                frame,
            });
        }
        Ok(store)
    }

    /// Slots in storage order.
    pub fn snapshot(&self) -> Vec<Slot<T>> {
        self.slots.iter().cloned().collect()
    }
}
