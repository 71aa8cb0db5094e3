use super::{EnvParams, EnvState, RawStep};

pub(super) const MAX_SPEED: i8 = 3;
pub(super) const ENERGY_BUCKETS: u8 = 5;

const THRUST: [i8; 4] = [-1, 0, 1, 0];
const INTERACT: usize = 3;
const PARTS: [&str; 4] = ["power_cell", "sensor_array", "data_crystal", "base_station"];

pub(super) fn initial(valley: u8) -> EnvState {
    EnvState::MountainCar {
        position: valley,
        velocity: 0,
        energy: 0,
        stage: 0,
    }
}

/// Height above the valley floor: cumulative slope magnitude.
fn height(gravity: &[i8], valley: u8, p: u8) -> i32 {
    let (lo, hi) = if p < valley { (p, valley) } else { (valley, p) };
    gravity[lo as usize..hi as usize]
        .iter()
        .map(|g| g.unsigned_abs() as i32)
        .sum()
}

fn energy_bucket(gravity: &[i8], valley: u8, p: u8, v: i8) -> u8 {
    let e = height(gravity, valley, p) + (v as i32) * (v as i32);
    (e / 3).min(ENERGY_BUCKETS as i32 - 1) as u8
}

pub(super) fn step(params: &EnvParams, s: &EnvState, action: usize) -> RawStep {
    let (
        EnvParams::MountainCar { positions, valley, gravity, power_cell, sensor_array, data_crystal, base_station },
        &EnvState::MountainCar { position, velocity, stage, .. },
    ) = (params, s)
    else {
        unreachable!("dispatched by Environment::transition")
    };
    // Interaction happens where the car is before it moves.
    let mut event = None;
    let mut stage = stage;
    if action == INTERACT {
        let sites = [*power_cell, *sensor_array, *data_crystal, *base_station];
        if let Some(&site) = sites.get(stage as usize) {
            if site == position {
                event = Some(PARTS[stage as usize]);
                stage += 1;
            }
        }
    }
    let v = (velocity + THRUST[action] + gravity[position as usize]).clamp(-MAX_SPEED, MAX_SPEED);
    let raw = position as i16 + v as i16;
    let last = *positions as i16 - 1;
    let (p, v) = if raw < 0 || raw > last {
        (raw.clamp(0, last) as u8, 0)
    } else {
        (raw as u8, v)
    };
    RawStep {
        next: EnvState::MountainCar {
            position: p,
            velocity: v,
            energy: energy_bucket(gravity, *valley, p, v),
            stage,
        },
        event,
        failed: false,
    }
}
