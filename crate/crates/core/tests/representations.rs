use evtpr_core::event_model::Polarity;
use evtpr_core::representations::{
    build_segment_grid, build_tpr, build_voxel_grid, parse_rational, tpr_granularity,
};
use evtpr_core::{Event, EventStream};
use num_rational::BigRational;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_stream(rng: &mut ChaCha8Rng, n: usize, w: u16, h: u16, t_end: u64) -> EventStream {
    let mut events: Vec<Event> = (0..n)
        .map(|_| {
            let p = if rng.gen_bool(0.5) { Polarity::Positive } else { Polarity::Negative };
            Event::new(rng.gen_range(0..w), rng.gen_range(0..h), rng.gen_range(0..=t_end), p)
        })
        .collect();
    events.sort_by(Event::canonical_cmp);
    EventStream::new(events, w, h, 0, t_end).unwrap()
}

fn signed_sum<'a>(events: impl Iterator<Item = &'a Event>) -> f64 {
    events.map(|e| e.p.sign() as f64).sum()
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-6 * b.abs().max(1.0)
}

/// Bin weights from the bilinear kernel evaluated directly, with the bin
/// coordinate clamped onto the outermost centres.
fn kernel_oracle(t: f64, t0: f64, t1: f64, bins: usize) -> Vec<f64> {
    let tau = (bins as f64 * (t - t0) / (t1 - t0) - 0.5).clamp(0.0, (bins - 1) as f64);
    (0..bins).map(|k| (1.0 - (tau - k as f64).abs()).max(0.0)).collect()
}

#[test]
fn voxel_grid_matches_kernel_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for _ in 0..20 {
        let stream = random_stream(&mut rng, 300, 5, 4, 10_000);
        let (t0, t1) = (rng.gen_range(0..4000), rng.gen_range(6000..=10_000));
        let bins = rng.gen_range(1..7);
        let grid = build_voxel_grid(&stream, bins, t0, t1).unwrap();
        let mut expected = vec![0.0f64; bins * 20];
        for e in stream.events().iter().filter(|e| (t0..=t1).contains(&e.t)) {
            for (k, wgt) in kernel_oracle(e.t as f64, t0 as f64, t1 as f64, bins).into_iter().enumerate() {
                expected[k * 20 + e.y as usize * 5 + e.x as usize] += wgt * e.p.sign() as f64;
            }
        }
        for (got, want) in grid.data().iter().zip(&expected) {
            assert!((*got as f64 - want).abs() < 1e-4, "{got} vs {want}");
        }
    }
}

#[test]
fn bin_centres_and_midpoints() {
    // M = 4 over [0, 400]: bin centres at 50, 150, 250, 350.
    let at = |t: u64, p: Polarity| EventStream::new(vec![Event::new(0, 0, t, p)], 1, 1, 0, 400).unwrap();
    let g = build_voxel_grid(&at(150, Polarity::Negative), 4, 0, 400).unwrap();
    assert_eq!(g.data(), &[0.0, -1.0, 0.0, 0.0]);
    let g = build_voxel_grid(&at(200, Polarity::Positive), 4, 0, 400).unwrap();
    assert_eq!(g.data(), &[0.0, 0.5, 0.5, 0.0]);
    let g = build_voxel_grid(&at(10, Polarity::Positive), 4, 0, 400).unwrap();
    assert_eq!(g.data(), &[1.0, 0.0, 0.0, 0.0]);
}

#[test]
fn segment_grids_partition_the_stream() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let stream = random_stream(&mut rng, 2000, 6, 6, 9_000);
    let cuts = [0u64, 3000, 6000, 9000];
    let mut total = 0.0;
    for (k, pair) in cuts.windows(2).enumerate() {
        let g = if k == 2 {
            build_voxel_grid(&stream, 3, pair[0], pair[1]).unwrap()
        } else {
            build_segment_grid(&stream, 3, pair[0], pair[1]).unwrap()
        };
        total += g.mass();
    }
    assert!(close(total, stream.polarity_sum() as f64));
}

#[test]
fn pyramid_levels_are_nested() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let stream = random_stream(&mut rng, 5000, 4, 4, 1_000_000);
    let tpr = build_tpr(&stream, 500_000.0, 500_000.0, 7, 2, 3.0).unwrap();
    assert_eq!(tpr.shape(), [7, 2, 4, 4]);
    for l in 1..7 {
        let (lo, hi) = tpr.level_window(l);
        let (nlo, nhi) = tpr.level_window(l + 1);
        assert!(lo < nlo && nhi < hi);
    }
    let (lo, hi) = tpr.level_window(1);
    assert!((lo - 500_000.0 + 500_000.0 / 3.0).abs() < 1e-6 && (hi - 500_000.0 - 500_000.0 / 3.0).abs() < 1e-6);
}

#[test]
fn event_at_centre_reaches_every_level() {
    let stream = EventStream::new(
        vec![
            Event::new(1, 0, 100, Polarity::Positive),
            Event::new(0, 0, 5000, Polarity::Negative),
            Event::new(0, 1, 9000, Polarity::Positive),
        ],
        2,
        2,
        0,
        10_000,
    )
    .unwrap();
    let tpr = build_tpr(&stream, 5000.0, 4000.0, 4, 3, 2.0).unwrap();
    for l in 1..=4 {
        assert_eq!(tpr.level_mass(l), -1.0);
    }
    // Outside the coarsest window (|t − c| > Δt/r = 2000) nothing is kept.
    assert!(tpr.data().iter().filter(|v| **v != 0.0).count() <= 4 * 2);
    assert!(build_tpr(&stream, 5000.0, 4000.0, 13, 3, 2.0).is_err());
}

#[test]
fn granularity_table() {
    let half = parse_rational("1/2").unwrap();
    let r = BigRational::from_integer(3.into());
    let cases = [((3, 3), "1/81"), ((5, 3), "1/729"), ((7, 3), "1/6561"), ((7, 9), "1/19683"), ((7, 18), "1/39366")];
    for ((l, m), want) in cases {
        let g = tpr_granularity(&half, l, m, &r).unwrap();
        assert_eq!(g.delta_t, parse_rational(want).unwrap(), "L={l} M_p={m}");
        assert_eq!(g.to_string(), format!("{want} s"));
    }
    let g = tpr_granularity(&half, 7, 2, &r).unwrap();
    assert_eq!(g.delta_t, parse_rational("1/4374").unwrap());
    assert!(g.delta_t < parse_rational("1/1000").unwrap());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn voxel_mass_is_conserved(seed in any::<u64>(), n in 0usize..400, bins in 1usize..9, a in 0u64..5000, len in 1u64..5000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let stream = random_stream(&mut rng, n, 7, 3, 10_000);
        let (t0, t1) = (a, a + len);
        let grid = build_voxel_grid(&stream, bins, t0, t1).unwrap();
        let want = signed_sum(stream.events().iter().filter(|e| e.t >= t0 && e.t <= t1));
        prop_assert!(close(grid.mass(), want), "{} vs {}", grid.mass(), want);
    }

    #[test]
    fn level_mass_is_conserved(
        seed in any::<u64>(),
        n in 0usize..600,
        levels in 1usize..6,
        moments in 1usize..5,
        r in 1.5f64..4.0,
        centre in 0f64..10_000.0,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let stream = random_stream(&mut rng, n, 4, 5, 10_000);
        let tpr = build_tpr(&stream, centre, 6000.0, levels, moments, r).unwrap();
        for l in 1..=levels {
            let (lo, hi) = tpr.level_window(l);
            let want = signed_sum(stream.events().iter().filter(|e| (e.t as f64) >= lo && (e.t as f64) <= hi));
            prop_assert!(close(tpr.level_mass(l), want), "level {} {} vs {}", l, tpr.level_mass(l), want);
        }
    }
}
