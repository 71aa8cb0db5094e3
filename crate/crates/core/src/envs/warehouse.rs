use super::{grid_move, EnvParams, EnvState, RawStep};

pub(super) const FULL_BATTERY: u8 = 4;

const INTERACT: usize = 4;

/// Stages: 0 empty-handed, 1 scanner held, 2 shelf scanned, 3 scanner
/// returned, 4 item held, 5 delivered.
pub(super) fn step(params: &EnvParams, s: &EnvState, action: usize) -> RawStep {
    let (
        EnvParams::Warehouse { rows, cols, walls, scanner, shelf, charging_station, item, dock, battery_period, .. },
        &EnvState::Warehouse { pos, stage, battery, tick },
    ) = (params, s)
    else {
        unreachable!("dispatched by Environment::transition")
    };
    let mut stage = stage;
    let mut event = None;
    let pos = if action == INTERACT {
        let (site, name) = match stage {
            0 => (*scanner, "scanner"),
            1 => (*shelf, "scan"),
            2 => (*charging_station, "charging_station"),
            3 => (*item, "item"),
            _ => (*dock, "deliver"),
        };
        if stage < 5 && pos == site {
            stage += 1;
            event = Some(name);
        }
        pos
    } else {
        grid_move(pos, action, *rows, *cols, walls)
    };
    let (battery, tick) = if pos == *charging_station {
        (FULL_BATTERY, 0)
    } else if tick + 1 >= *battery_period {
        (battery.saturating_sub(1), 0)
    } else {
        (battery, tick + 1)
    };
    RawStep {
        next: EnvState::Warehouse { pos, stage, battery, tick },
        event,
        failed: battery == 0,
    }
}
