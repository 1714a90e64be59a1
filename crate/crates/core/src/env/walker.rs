//! Planar four-legged walker.
//!
//! A rigid body (mass, pitch inertia) carries four two-segment legs. Legs are
//! massless: each joint follows its own first-order torque dynamics, and the
//! body is moved only through penalty-spring ground contacts at the feet and
//! at both body tips. Horizontal contact force is viscous friction capped by a
//! Coulomb cone, so a planted foot that sweeps backward pushes the body
//! forward. Integration is semi-implicit Euler with `SUBSTEPS` substeps per control
//! step of `DT`.

use rand::distr::{Distribution, Uniform};

use super::{EnvSpec, Environment, MorphologyVariant, RewardMode, Transition};
use crate::error::{Error, Result};
use crate::seed;

pub const LIMB_IDS: [&str; 4] = ["frontleft", "frontright", "backleft", "backright"];

pub(crate) const OBS_DIM: usize = 28;
pub(crate) const ACT_DIM: usize = 8;

pub const DT: f64 = 0.01;
const SUBSTEPS: usize = 5;
const GRAVITY: f64 = 9.81;
const BODY_MASS: f64 = 1.0;
const BODY_INERTIA: f64 = 0.2;
const BODY_HALF_LEN: f64 = 0.35;
const HIP_X: [f64; 4] = [0.3, 0.3, -0.3, -0.3];
const UPPER_LEN: f64 = 0.2;
/// Standard lower-leg ("ankle") length; variants scale this segment.
pub const LOWER_LEN: f64 = 0.4;

const JOINT_GEAR: f64 = 1.0;
const JOINT_INERTIA: f64 = 0.01;
const JOINT_DAMPING: f64 = 0.25;
const JOINT_LIMIT_STIFFNESS: f64 = 10.0;
const HIP_RANGE: (f64, f64) = (-1.0, 1.0);
const KNEE_RANGE: (f64, f64) = (-1.5, 1.5);

const GROUND_STIFFNESS: f64 = 1000.0;
const GROUND_DAMPING: f64 = 20.0;
const FRICTION_DAMPING: f64 = 20.0;
const FRICTION_COEF: f64 = 1.0;

const SURVIVAL_BONUS: f64 = 0.5;
const UPRIGHT_PITCH: f64 = 1.0;
const UPRIGHT_HEIGHT: f64 = 0.2;
const INSTABILITY_BOUND: f64 = 1e6;
const INIT_JOINT_JITTER: f64 = 0.05;

#[derive(Debug, Clone, PartialEq)]
struct State {
    x: f64,
    y: f64,
    pitch: f64,
    vx: f64,
    vy: f64,
    omega: f64,
    q: [f64; 8],
    qd: [f64; 8],
}

impl State {
    fn values(&self) -> impl Iterator<Item = f64> + '_ {
        [self.x, self.y, self.pitch, self.vx, self.vy, self.omega]
            .into_iter()
            .chain(self.q)
            .chain(self.qd)
    }

    fn is_stable(&self) -> bool {
        self.values().all(|v| v.is_finite() && v.abs() <= INSTABILITY_BOUND)
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct Contact {
    force: (f64, f64),
    torque: f64,
}

/// Penalty contact at world point `p` moving with velocity `v`.
fn ground_contact(p: (f64, f64), v: (f64, f64), com: (f64, f64)) -> Contact {
    if p.1 >= 0.0 {
        return Contact::default();
    }
    let fn_ = (GROUND_STIFFNESS * -p.1 - GROUND_DAMPING * v.1).max(0.0);
    let cap = FRICTION_COEF * fn_;
    let ft = (-FRICTION_DAMPING * v.0).clamp(-cap, cap);
    let r = (p.0 - com.0, p.1 - com.1);
    Contact {
        force: (ft, fn_),
        torque: r.0 * fn_ - r.1 * ft,
    }
}

#[derive(Debug, Clone)]
pub struct SegWalker2D {
    spec: EnvSpec,
    lower_len: [f64; 4],
    state: Option<State>,
    steps: usize,
    done: bool,
    // Normal force per foot from the last contact evaluation.
    foot_load: [f64; 4],
}

impl SegWalker2D {
    pub fn new(episode_steps: usize, reward_mode: RewardMode) -> Self {
        SegWalker2D {
            spec: EnvSpec {
                obs_dim: OBS_DIM,
                act_dim: ACT_DIM,
                episode_steps,
                reward_mode,
            },
            lower_len: [LOWER_LEN; 4],
            state: None,
            steps: 0,
            done: false,
            foot_load: [0.0; 4],
        }
    }

    fn hip(&self, s: &State, leg: usize) -> (f64, f64) {
        let (sin, cos) = s.pitch.sin_cos();
        (s.x + HIP_X[leg] * cos, s.y + HIP_X[leg] * sin)
    }

    /// Foot position and velocity of one leg.
    fn foot(&self, s: &State, leg: usize) -> ((f64, f64), (f64, f64)) {
        let hip = self.hip(s, leg);
        let r = (hip.0 - s.x, hip.1 - s.y);
        let hip_v = (s.vx - s.omega * r.1, s.vy + s.omega * r.0);
        let phi1 = s.pitch + s.q[2 * leg];
        let phi2 = phi1 + s.q[2 * leg + 1];
        let rate1 = s.omega + s.qd[2 * leg];
        let rate2 = rate1 + s.qd[2 * leg + 1];
        let (s1, c1) = phi1.sin_cos();
        let (s2, c2) = phi2.sin_cos();
        let l2 = self.lower_len[leg];
        let pos = (
            hip.0 + UPPER_LEN * s1 + l2 * s2,
            hip.1 - UPPER_LEN * c1 - l2 * c2,
        );
        let vel = (
            hip_v.0 + UPPER_LEN * c1 * rate1 + l2 * c2 * rate2,
            hip_v.1 + UPPER_LEN * s1 * rate1 + l2 * s2 * rate2,
        );
        (pos, vel)
    }

    fn tips(&self, s: &State) -> [((f64, f64), (f64, f64)); 2] {
        let (sin, cos) = s.pitch.sin_cos();
        [1.0, -1.0].map(|side| {
            let r = (side * BODY_HALF_LEN * cos, side * BODY_HALF_LEN * sin);
            (
                (s.x + r.0, s.y + r.1),
                (s.vx - s.omega * r.1, s.vy + s.omega * r.0),
            )
        })
    }

    fn observe(&self, s: &State) -> Vec<f64> {
        let mut obs = Vec::with_capacity(OBS_DIM);
        obs.extend([s.y, s.pitch, s.vx, s.omega]);
        obs.extend(s.q);
        obs.extend(s.qd.iter().map(|v| 0.1 * v));
        for leg in 0..4 {
            let (pos, _) = self.foot(s, leg);
            obs.push((self.foot_load[leg] / (BODY_MASS * GRAVITY)).clamp(0.0, 2.0));
            obs.push(pos.1.clamp(-0.1, 1.0));
        }
        obs
    }

    fn upright(s: &State) -> bool {
        s.pitch.abs() < UPRIGHT_PITCH && s.y > UPRIGHT_HEIGHT
    }

    fn integrate(&mut self, s: &State, action: &[f64]) -> State {
        let mut next = s.clone();
        for _ in 0..SUBSTEPS {
            next = self.substep(&next, action);
        }
        next
    }

    fn substep(&mut self, s: &State, action: &[f64]) -> State {
        const H: f64 = DT / SUBSTEPS as f64;
        let com = (s.x, s.y);
        let mut fx = 0.0;
        let mut fy = -BODY_MASS * GRAVITY;
        let mut torque = 0.0;
        for leg in 0..4 {
            let (p, v) = self.foot(s, leg);
            let c = ground_contact(p, v, com);
            self.foot_load[leg] = c.force.1;
            fx += c.force.0;
            fy += c.force.1;
            torque += c.torque;
        }
        for (p, v) in self.tips(s) {
            let c = ground_contact(p, v, com);
            fx += c.force.0;
            fy += c.force.1;
            torque += c.torque;
        }

        let mut next = s.clone();
        next.vx += H * fx / BODY_MASS;
        next.vy += H * fy / BODY_MASS;
        next.omega += H * torque / BODY_INERTIA;
        next.x += H * next.vx;
        next.y += H * next.vy;
        next.pitch += H * next.omega;

        for j in 0..8 {
            let (lo, hi) = if j % 2 == 0 { HIP_RANGE } else { KNEE_RANGE };
            let q = s.q[j];
            let limit = if q < lo {
                JOINT_LIMIT_STIFFNESS * (lo - q)
            } else if q > hi {
                JOINT_LIMIT_STIFFNESS * (hi - q)
            } else {
                0.0
            };
            let tau = JOINT_GEAR * action[j] - JOINT_DAMPING * s.qd[j] + limit;
            next.qd[j] += H * tau / JOINT_INERTIA;
            next.q[j] += H * next.qd[j];
        }
        next
    }

    #[cfg(test)]
    fn state_mut(&mut self) -> &mut State {
        self.state.as_mut().expect("reset first")
    }
}

impl Environment for SegWalker2D {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn n_limbs(&self) -> usize {
        LIMB_IDS.len()
    }

    fn reset(&mut self, variant: &MorphologyVariant, seed: u64) -> Result<Vec<f64>> {
        variant.validate(LIMB_IDS.len())?;
        for (len, &scale) in self.lower_len.iter_mut().zip(&variant.limb_scales) {
            *len = LOWER_LEN * scale;
        }
        let mut rng = seed::rng(seed, &[seed::STREAM_ENV]);
        let jitter = Uniform::new_inclusive(-INIT_JOINT_JITTER, INIT_JOINT_JITTER)
            .expect("valid range");
        let mut s = State {
            x: 0.0,
            y: 0.0,
            pitch: 0.0,
            vx: 0.0,
            vy: 0.0,
            omega: 0.0,
            q: [0.0; 8],
            qd: [0.0; 8],
        };
        for q in &mut s.q {
            *q = jitter.sample(&mut rng);
        }
        // Lowest foot touches the ground.
        let lowest = (0..4)
            .map(|leg| self.foot(&s, leg).0 .1)
            .fold(f64::INFINITY, f64::min);
        s.y = -lowest;
        self.foot_load = [0.0; 4];
        let obs = self.observe(&s);
        self.state = Some(s);
        self.steps = 0;
        self.done = false;
        Ok(obs)
    }

    fn step(&mut self, action: &[f64]) -> Result<Transition> {
        if action.len() != ACT_DIM {
            return Err(Error::InputShape {
                expected: ACT_DIM,
                got: action.len(),
            });
        }
        let s = match (&self.state, self.done) {
            (None, _) => return Err(Error::State("step before reset".into())),
            (Some(_), true) => return Err(Error::State("step after episode end".into())),
            (Some(s), false) => s.clone(),
        };
        let act: Vec<f64> = action
            .iter()
            .map(|a| if a.is_nan() { 0.0 } else { a.clamp(-1.0, 1.0) })
            .collect();
        let next = self.integrate(&s, &act);
        self.steps += 1;

        if !next.is_stable() {
            // Keep the last stable state so positions stay meaningful.
            self.done = true;
            return Ok(Transition {
                obs: self.observe(&s),
                reward: 0.0,
                done: true,
            });
        }

        let dx = next.x - s.x;
        let reward = match self.spec.reward_mode {
            RewardMode::DistanceOnly => dx,
            RewardMode::Full => {
                dx / DT + if Self::upright(&next) { SURVIVAL_BONUS } else { 0.0 }
            }
        };
        self.done = self.steps >= self.spec.episode_steps;
        let obs = self.observe(&next);
        self.state = Some(next);
        Ok(Transition {
            obs,
            reward,
            done: self.done,
        })
    }

    fn position(&self) -> f64 {
        self.state.as_ref().map_or(0.0, |s| s.x)
    }
}
