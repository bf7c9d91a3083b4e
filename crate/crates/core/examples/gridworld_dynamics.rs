// Simultaneous moves on a small periodic strip: a head-on conflict, a swap,
// a follower, a wall bump and a move across the seam.

use esn_crowd::env::{resolve_step, Action, AgentState, Direction, MapSpec, MoveIntent, Pos};

fn draw(map: &MapSpec, agents: &[AgentState]) {
    for y in 0..map.height {
        let row: String = (0..map.width)
            .map(|x| {
                let p = Pos::new(x, y);
                if let Some(a) = agents.iter().find(|a| a.position == p) {
                    char::from_digit(a.id as u32, 36).unwrap_or('?')
                } else if map.is_walkable(p) {
                    '.'
                } else {
                    '#'
                }
            })
            .collect();
        println!("  {row}");
    }
}

fn main() -> esn_crowd::Result<()> {
    let map = MapSpec::parse("strip", "..........\n...#......\n..........\n")?;
    let r = Direction::Right;
    let l = Direction::Left;
    let mut agents = vec![
        AgentState::new(0, Pos::new(0, 0), 0, r),
        AgentState::new(1, Pos::new(2, 0), 1, l),
        AgentState::new(2, Pos::new(5, 0), 0, r),
        AgentState::new(3, Pos::new(6, 0), 1, l),
        AgentState::new(4, Pos::new(7, 2), 0, r),
        AgentState::new(5, Pos::new(8, 2), 0, r),
        AgentState::new(6, Pos::new(3, 2), 0, r),
        AgentState::new(7, Pos::new(9, 1), 0, r),
    ];
    let actions = [
        Action::Right, // 0 and 1 both target (1, 0): both stay
        Action::Left,
        Action::Right, // 2 and 3 try to swap: both stay
        Action::Left,
        Action::Right, // 4 follows 5 into a cell being vacated: stays
        Action::Right,
        Action::Up,    // 6 bumps the wall at (3, 1)
        Action::Right, // 7 wraps from x = 9 to x = 0
    ];
    println!("before:");
    draw(&map, &agents);
    let intents: Vec<MoveIntent> = agents.iter().zip(&actions).map(|(a, &x)| MoveIntent::new(&map, a, x)).collect();
    let out = resolve_step(&map, &agents, &intents)?;
    for (a, p) in agents.iter_mut().zip(&out.positions) {
        a.position = *p;
    }
    println!("after:");
    draw(&map, &agents);
    println!("rewards {:?}", out.rewards);
    Ok(())
}
