use super::{grid_move, EnvParams, EnvState, RawStep};

/// Quest stages: 0 nothing, 1 key, 2 chest open, 3 sword, 4 shield, 5 dragon slain.
pub(super) fn step(params: &EnvParams, s: &EnvState, action: usize) -> RawStep {
    let (EnvParams::Dungeon { rows, cols, walls, key, chest, shield, dragon, .. }, &EnvState::Dungeon { pos, stage }) =
        (params, s)
    else {
        unreachable!("dispatched by Environment::transition")
    };
    let pos = grid_move(pos, action, *rows, *cols, walls);
    // The sword is taken from the chest on any step that ends on the chest
    // after the step that opened it.
    let (stage, event) = match stage {
        0 if pos == *key => (1, Some("key")),
        1 if pos == *chest => (2, Some("chest")),
        2 if pos == *chest => (3, Some("sword")),
        3 if pos == *shield => (4, Some("shield")),
        4 if pos == *dragon => (5, Some("dragon")),
        s => (s, None),
    };
    RawStep {
        next: EnvState::Dungeon { pos, stage },
        event,
        failed: false,
    }
}
