//! Synthetic scenarios and perception logs with injected faults.
//!
//! Three archetypes: an urban crossing with pedestrians and cyclists, a dense
//! motorway, and a rural road with few other road users. Everything moves at
//! constant velocity. Output depends only on the archetype, fault list and seed.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::geometry::OrientedBox;
use crate::scenario::{
    ClassLabel, Detection, DetectionFrame, EgoState, EnvironmentParams, Frame, ObjectState, PerceptionLog, Scenario,
    ScenarioMeta, DEFAULT_FRAME_RATE_HZ,
};

pub const FIXTURE_FRAMES: u64 = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Archetype {
    Crossing,
    Motorway,
    Rural,
}

impl Archetype {
    pub const ALL: [Archetype; 3] = [Archetype::Crossing, Archetype::Motorway, Archetype::Rural];

    pub fn as_str(self) -> &'static str {
        match self {
            Archetype::Crossing => "crossing",
            Archetype::Motorway => "motorway",
            Archetype::Rural => "rural",
        }
    }
}

impl fmt::Display for Archetype {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Archetype {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Archetype::ALL
            .into_iter()
            .find(|a| a.as_str() == s)
            .ok_or_else(|| Error::input("archetype", format!("unknown archetype '{s}' (crossing, motorway, rural)")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Fault {
    /// Never report the object with this id.
    Drop(String),
    /// Lose each detection independently with this probability.
    Miss(f64),
    /// Report each object only from its k-th frame on.
    Delay(u64),
    /// Gaussian noise (m) on box centers.
    Jitter(f64),
    /// Exchange the track ids of two objects from a frame on.
    Swap { a: String, b: String, from_frame: u64 },
    /// Detection timestamps lag the frame by this many seconds.
    Latency(f64),
}

fn fault_error(spec: &str, why: &str) -> Error {
    Error::input("fault", format!("invalid fault '{spec}': {why}"))
}

fn parse_number<T: FromStr>(spec: &str, v: &str) -> Result<T> {
    v.trim().parse().map_err(|_| fault_error(spec, "expected a number"))
}

impl FromStr for Fault {
    type Err = Error;

    /// `drop=ID`, `miss=RATE`, `delay=FRAMES`, `jitter=SIGMA`, `swap=A:B@FRAME`, `latency=SECONDS`.
    fn from_str(spec: &str) -> Result<Self> {
        let (kind, value) = spec
            .split_once('=')
            .ok_or_else(|| fault_error(spec, "expected kind=value"))?;
        match kind.trim() {
            "drop" if !value.trim().is_empty() => Ok(Fault::Drop(value.trim().to_string())),
            "drop" => Err(fault_error(spec, "missing object id")),
            "miss" => {
                let r: f64 = parse_number(spec, value)?;
                if !(0.0..=1.0).contains(&r) {
                    return Err(fault_error(spec, "rate must be in [0, 1]"));
                }
                Ok(Fault::Miss(r))
            }
            "delay" => Ok(Fault::Delay(parse_number(spec, value)?)),
            "jitter" => {
                let s: f64 = parse_number(spec, value)?;
                if !(s >= 0.0 && s.is_finite()) {
                    return Err(fault_error(spec, "sigma must be non-negative"));
                }
                Ok(Fault::Jitter(s))
            }
            "swap" => {
                let (pair, frame) = value
                    .split_once('@')
                    .ok_or_else(|| fault_error(spec, "expected A:B@FRAME"))?;
                let (a, b) = pair.split_once(':').ok_or_else(|| fault_error(spec, "expected A:B@FRAME"))?;
                if a.is_empty() || b.is_empty() || a == b {
                    return Err(fault_error(spec, "need two different object ids"));
                }
                Ok(Fault::Swap {
                    a: a.to_string(),
                    b: b.to_string(),
                    from_frame: parse_number(spec, frame)?,
                })
            }
            "latency" => {
                let s: f64 = parse_number(spec, value)?;
                if !(s >= 0.0 && s.is_finite()) {
                    return Err(fault_error(spec, "latency must be non-negative"));
                }
                Ok(Fault::Latency(s))
            }
            other => Err(fault_error(spec, &format!("unknown fault kind '{other}'"))),
        }
    }
}

/// Object at its frame-0 pose, moving at constant velocity.
struct Actor {
    class: ClassLabel,
    x: f64,
    y: f64,
    vx: f64,
    vy: f64,
    length: f64,
    width: f64,
}

fn dims(class: ClassLabel, rng: &mut ChaCha8Rng) -> (f64, f64) {
    match class {
        ClassLabel::Pedestrian => (rng.gen_range(0.5..0.8), rng.gen_range(0.5..0.7)),
        ClassLabel::Cyclist => (rng.gen_range(1.6..1.9), rng.gen_range(0.6..0.8)),
        ClassLabel::Truck => (rng.gen_range(10.0..16.0), rng.gen_range(2.4..2.6)),
        ClassLabel::Van => (rng.gen_range(4.8..5.6), rng.gen_range(1.9..2.1)),
        _ => (rng.gen_range(4.0..4.8), rng.gen_range(1.7..1.9)),
    }
}

fn actor(class: ClassLabel, x: f64, y: f64, vx: f64, vy: f64, rng: &mut ChaCha8Rng) -> Actor {
    let (length, width) = dims(class, rng);
    Actor {
        class,
        x,
        y,
        vx,
        vy,
        length,
        width,
    }
}

fn crossing_actors(rng: &mut ChaCha8Rng) -> (f64, Vec<Actor>) {
    let ego_speed = rng.gen_range(10.0..13.0);
    let mut a = Vec::new();
    // pedestrians on the crosswalk ahead
    for k in 0..3 {
        let from_left = k % 2 == 0;
        let y = if from_left { rng.gen_range(4.0..7.0) } else { -rng.gen_range(4.0..7.0) };
        let vy = rng.gen_range(1.2..1.7) * if from_left { -1.0 } else { 1.0 };
        a.push(actor(ClassLabel::Pedestrian, rng.gen_range(32.0..38.0), y, 0.0, vy, rng));
    }
    a.push(actor(ClassLabel::Cyclist, rng.gen_range(45.0..55.0), -rng.gen_range(8.0..12.0), 0.0, rng.gen_range(4.0..6.0), rng));
    // cross traffic and oncoming traffic
    a.push(actor(ClassLabel::Car, rng.gen_range(60.0..70.0), rng.gen_range(25.0..35.0), 0.0, -rng.gen_range(8.0..11.0), rng));
    a.push(actor(ClassLabel::Car, rng.gen_range(70.0..90.0), 3.5, -rng.gen_range(9.0..12.0), 0.0, rng));
    // parked cars along the curb
    for k in 0..2 {
        a.push(actor(ClassLabel::Car, 15.0 + 7.0 * k as f64 + rng.gen_range(0.0..1.0), -4.2, 0.0, 0.0, rng));
    }
    (ego_speed, a)
}

fn motorway_actors(rng: &mut ChaCha8Rng) -> (f64, Vec<Actor>) {
    let ego_speed = rng.gen_range(29.0..32.0);
    let lane = 3.75;
    let mut a = Vec::new();
    // slower lead vehicle in the ego lane
    a.push(actor(ClassLabel::Car, rng.gen_range(35.0..50.0), 0.0, rng.gen_range(24.0..27.0), 0.0, rng));
    // faster follower
    a.push(actor(ClassLabel::Car, -rng.gen_range(25.0..32.0), 0.0, rng.gen_range(31.5..33.5), 0.0, rng));
    // truck cutting in from the right lane
    a.push(actor(ClassLabel::Truck, rng.gen_range(25.0..35.0), -lane, rng.gen_range(25.0..27.0), rng.gen_range(0.5..0.8), rng));
    for k in 0..6 {
        let y = if k % 2 == 0 { lane } else { -lane };
        let class = [ClassLabel::Car, ClassLabel::Van, ClassLabel::Car][k % 3];
        let x = -40.0 + 30.0 * k as f64 + rng.gen_range(-4.0..4.0);
        a.push(actor(class, x, y, rng.gen_range(26.0..35.0), 0.0, rng));
    }
    a.push(actor(ClassLabel::Truck, rng.gen_range(90.0..110.0), -lane, rng.gen_range(22.0..24.0), 0.0, rng));
    (ego_speed, a)
}

fn rural_actors(rng: &mut ChaCha8Rng) -> (f64, Vec<Actor>) {
    let ego_speed = rng.gen_range(18.0..22.0);
    let a = vec![
        actor(ClassLabel::Car, rng.gen_range(80.0..100.0), 3.5, -rng.gen_range(18.0..23.0), 0.0, rng),
        actor(ClassLabel::Car, rng.gen_range(85.0..100.0), 0.0, ego_speed + rng.gen_range(0.0..2.0), 0.0, rng),
        actor(ClassLabel::Pedestrian, rng.gen_range(40.0..70.0), -rng.gen_range(7.0..9.0), 0.0, 0.0, rng),
    ];
    (ego_speed, a)
}

/// Ground truth for an archetype; object ids are `o1`, `o2`, ...
pub fn generate_scenario(archetype: Archetype, seed: u64) -> Scenario {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (ego_speed, actors) = match archetype {
        Archetype::Crossing => crossing_actors(&mut rng),
        Archetype::Motorway => motorway_actors(&mut rng),
        Archetype::Rural => rural_actors(&mut rng),
    };
    let dt = 1.0 / DEFAULT_FRAME_RATE_HZ;
    let frames = (0..FIXTURE_FRAMES)
        .map(|k| {
            let t = k as f64 * dt;
            Frame {
                index: k,
                timestamp: t,
                ego: EgoState {
                    bbox: OrientedBox::new(ego_speed * t, 0.0, 4.6, 1.85, 0.0).expect("valid ego box"),
                    speed: ego_speed,
                },
                objects: actors
                    .iter()
                    .enumerate()
                    .map(|(i, a)| {
                        let yaw = if a.vx.hypot(a.vy) > 0.1 { a.vy.atan2(a.vx) } else { 0.0 };
                        ObjectState {
                            id: format!("o{}", i + 1),
                            class: a.class,
                            bbox: OrientedBox::new(a.x + a.vx * t, a.y + a.vy * t, a.length, a.width, yaw)
                                .expect("valid actor box"),
                            velocity: [a.vx, a.vy],
                        }
                    })
                    .collect(),
            }
        })
        .collect();
    Scenario {
        meta: ScenarioMeta {
            name: archetype.to_string(),
            frame_rate_hz: DEFAULT_FRAME_RATE_HZ,
        },
        environment: EnvironmentParams::default(),
        frames,
        warnings: Vec::new(),
    }
}

/// Perception log derived from the ground truth with the given faults.
/// Without faults every box is reproduced exactly with track id `trk-<id>`.
pub fn derive_log(scenario: &Scenario, faults: &[Fault], seed: u64) -> PerceptionLog {
    // separate stream from the scenario generator
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_1095);
    let mut miss_rate = 0.0;
    let mut delay = 0u64;
    let mut sigma = 0.0;
    let mut latency = 0.0;
    let mut dropped: Vec<&str> = Vec::new();
    let mut swaps: Vec<(&str, &str, u64)> = Vec::new();
    for f in faults {
        match f {
            Fault::Drop(id) => dropped.push(id),
            Fault::Miss(r) => miss_rate = *r,
            Fault::Delay(k) => delay = *k,
            Fault::Jitter(s) => sigma = *s,
            Fault::Swap { a, b, from_frame } => swaps.push((a, b, *from_frame)),
            Fault::Latency(s) => latency = *s,
        }
    }
    let noise = Normal::new(0.0, 1.0).expect("unit normal");
    let mut first_frame: std::collections::BTreeMap<&str, u64> = std::collections::BTreeMap::new();

    let frames = scenario
        .frames
        .iter()
        .map(|frame| {
            let mut detections = Vec::new();
            for obj in &frame.objects {
                // fixed number of draws per object keeps the stream aligned
                let u: f64 = rng.gen();
                let (nx, ny): (f64, f64) = (noise.sample(&mut rng), noise.sample(&mut rng));
                let score = rng.gen_range(0.5..1.0);
                let first = *first_frame.entry(obj.id.as_str()).or_insert(frame.index);
                if dropped.contains(&obj.id.as_str()) || frame.index < first + delay || u < miss_rate {
                    continue;
                }
                let mut track = obj.id.as_str();
                for &(a, b, from) in &swaps {
                    if frame.index >= from {
                        if track == a {
                            track = b;
                        } else if track == b {
                            track = a;
                        }
                    }
                }
                let c = obj.bbox.center();
                detections.push(Detection {
                    bbox: obj.bbox.with_center([c[0] + sigma * nx, c[1] + sigma * ny]),
                    class: obj.class,
                    score,
                    track_id: Some(format!("trk-{track}")),
                    timestamp: frame.timestamp + latency,
                });
            }
            DetectionFrame {
                index: frame.index,
                detections,
            }
        })
        .collect();
    PerceptionLog {
        frames,
        inferred_timestamps: false,
        warnings: Vec::new(),
    }
}

pub fn generate(archetype: Archetype, faults: &[Fault], seed: u64) -> (Scenario, PerceptionLog) {
    let scenario = generate_scenario(archetype, seed);
    let log = derive_log(&scenario, faults, seed);
    (scenario, log)
}
