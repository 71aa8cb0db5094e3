use super::{grid_move, EnvParams, EnvState, RawStep};

pub(super) fn step(params: &EnvParams, s: &EnvState, action: usize) -> RawStep {
    let (EnvParams::Craftsman { rows, cols, home, factory, wood: piles, quota, .. }, &EnvState::Craftsman { pos, wood, tools }) =
        (params, s)
    else {
        unreachable!("dispatched by Environment::transition")
    };
    let pos = grid_move(pos, action, *rows, *cols, &[]);
    let (mut wood, mut tools) = (wood, tools);
    let mut event = None;
    // Capacity is one piece of wood; piles never run out.
    if wood == 0 && tools < *quota && piles.contains(&pos) {
        wood = 1;
        event = Some("wood");
    } else if wood > 0 && pos == *factory {
        wood -= 1;
        tools += 1;
        event = Some("factory");
    } else if tools >= *quota && pos == *home {
        event = Some("home");
    }
    RawStep {
        next: EnvState::Craftsman { pos, wood, tools },
        event,
        failed: false,
    }
}
