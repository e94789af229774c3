use proptest::prelude::*;

use polar_core::world::{
    build_scene_graph, gen_world, shortest_path_length, ActionLow, AgentState, Heading, ObjectSpec, Point, World,
    WorldParams, VIEW_RANGE,
};

fn params(seed: u64, n_rooms: usize) -> WorldParams {
    WorldParams {
        seed,
        n_rooms,
        objects: ["mug", "lamp", "book", "vase"]
            .iter()
            .map(|c| ObjectSpec {
                category: c.to_string(),
                count: 2,
            })
            .collect(),
    }
}

fn free_point(world: &World, pick: usize) -> Point {
    let cells: Vec<_> = world.free_cells().collect();
    World::cell_center(cells[pick % cells.len()])
}

fn action(k: u8) -> ActionLow {
    match k % 4 {
        0 | 1 => ActionLow::MoveForward,
        2 => ActionLow::TurnLeft,
        _ => ActionLow::TurnRight,
    }
}

/// Independent visibility check: dense sampling along the sight line.
fn sampled_clear(world: &World, from: Point, to: Point) -> bool {
    let n = (from.distance(&to) / 0.01).ceil().max(1.0) as usize;
    (0..=n).all(|i| {
        let t = i as f64 / n as f64;
        world.is_free(Point::new(from.x + (to.x - from.x) * t, from.y + (to.y - from.y) * t))
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn generation_is_pure_and_connected(seed in any::<u64>(), n_rooms in 2usize..=10) {
        let a = gen_world(&params(seed, n_rooms)).unwrap();
        let b = gen_world(&params(seed, n_rooms)).unwrap();
        prop_assert_eq!(a.to_json(), b.to_json());
        prop_assert_eq!(a.rooms().len(), n_rooms);
        prop_assert!(build_scene_graph(&a).is_connected());
        prop_assert_eq!(World::from_json(&a.to_json()).unwrap(), a.clone());
    }

    #[test]
    fn headings_stay_in_the_twelve_value_set(start in 0u16..12, turns in prop::collection::vec(any::<bool>(), 0..200)) {
        let mut h = Heading::new(start * 30).unwrap();
        for right in turns {
            h = if right { h.turned_right() } else { h.turned_left() };
            prop_assert!(h.degrees().is_multiple_of(30) && h.degrees() < 360);
            prop_assert!(Heading::new(h.degrees()).is_ok());
        }
    }

    #[test]
    fn actions_keep_the_agent_in_free_space(
        seed in 0u64..1000,
        pick in any::<usize>(),
        actions in prop::collection::vec(any::<u8>(), 1..300),
    ) {
        let world = gen_world(&params(seed, 6)).unwrap();
        let mut state = AgentState::new(free_point(&world, pick), Heading::NORTH);
        for (i, k) in actions.into_iter().enumerate() {
            let before = state.position;
            let r = world.step(&state, action(k));
            state = r.state;
            prop_assert!(world.is_free(state.position));
            prop_assert_eq!(state.steps_taken as usize, i + 1);
            if r.observation.blocked {
                prop_assert_eq!(state.position, before);
            }
        }
    }

    #[test]
    fn path_lengths_are_symmetric_and_obey_the_triangle_inequality(
        seed in 0u64..1000,
        picks in (any::<usize>(), any::<usize>(), any::<usize>()),
    ) {
        let world = gen_world(&params(seed, 5)).unwrap();
        let (a, b, c) = (free_point(&world, picks.0), free_point(&world, picks.1), free_point(&world, picks.2));
        let d = |p, q| shortest_path_length(&world, p, q).unwrap();
        prop_assert!((d(a, b) - d(b, a)).abs() <= 1e-9);
        prop_assert!(d(a, c) <= d(a, b) + d(b, c) + 1e-9);
        prop_assert!(d(a, b) + 1e-9 >= a.distance(&b) - 0.25 * std::f64::consts::SQRT_2);
        prop_assert!(d(a, b).is_finite());
        prop_assert_eq!(d(a, a), 0.0);
    }

    #[test]
    fn every_sighting_is_in_range_and_unoccluded(seed in 0u64..1000, pick in any::<usize>(), h in 0u16..12) {
        let world = gen_world(&params(seed, 6)).unwrap();
        let state = AgentState::new(free_point(&world, pick), Heading::new(h * 30).unwrap());
        let obs = world.observe(&state);
        for view in obs.views() {
            for s in &view.visible {
                let o = world.object(&s.object_id).unwrap();
                let d = state.position.distance(&o.position);
                prop_assert!(d <= VIEW_RANGE + 1e-9);
                prop_assert!((d - s.distance).abs() <= 1e-12);
                prop_assert!(sampled_clear(&world, state.position, o.position), "{} seen through a wall", s.object_id);
            }
        }
    }
}

#[test]
fn out_of_bounds_points_are_rejected() {
    let world = gen_world(&params(1, 4)).unwrap();
    let inside = free_point(&world, 0);
    assert!(shortest_path_length(&world, inside, Point::new(-1.0, 0.0)).is_err());
    assert!(gen_world(&params(1, 1)).is_err());
    assert!(gen_world(&params(1, 13)).is_err());
}
