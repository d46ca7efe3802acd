//! Property tests for the spec-level invariants that hold for arbitrary
//! inputs (rather than worked examples).

use proptest::prelude::*;
use vecscene_core::chunks::{farthest_point_sampling, normalize_coords};
use vecscene_core::eval::iou;
use vecscene_core::nn::layers::{fourier_pe, fourier_width};
use vecscene_core::nn::Tensor;
use vecscene_core::voxel::{flood_fill_solid, nuiv, OccupancyGrid};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn normalize_coords_is_invertible(
        coords in prop::collection::vec((0.0f64..200.0, 0.0f64..500.0, 0.0f64..200.0), 1..50),
        d in (1.0f64..100.0, 1.0f64..100.0, 1.0f64..100.0),
    ) {
        let coords: Vec<[f64; 3]> = coords.into_iter().map(|(x, y, z)| [x, y, z]).collect();
        let d = [d.0, d.1, d.2];
        let normed = normalize_coords(&coords, d).unwrap();
        for (orig, n) in coords.iter().zip(&normed) {
            for a in 0..3 {
                let back = d[a] * (n[a] + 1.0) / 2.0;
                prop_assert!((back - orig[a]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn fps_full_selection_is_permutation(
        points in prop::collection::vec((0.0f64..100.0, 0.0f64..100.0), 1..40),
        start_frac in 0.0f64..1.0,
    ) {
        let candidates: Vec<[f64; 2]> = points.into_iter().map(|(x, z)| [x, z]).collect();
        let start = ((candidates.len() as f64 * start_frac) as usize).min(candidates.len() - 1);
        let sel = farthest_point_sampling(&candidates, candidates.len(), start).unwrap();
        let mut sorted = sel.clone();
        sorted.sort_unstable();
        sorted.dedup();
        prop_assert_eq!(sorted.len(), candidates.len());
        prop_assert_eq!(sel[0], start);
    }

    #[test]
    fn fps_min_distance_non_increasing(
        points in prop::collection::vec((0.0f64..100.0, 0.0f64..100.0), 3..30),
    ) {
        let candidates: Vec<[f64; 2]> = points.into_iter().map(|(x, z)| [x, z]).collect();
        let mut prev = f64::INFINITY;
        for k in 2..=candidates.len() {
            let sel = farthest_point_sampling(&candidates, k, 0).unwrap();
            let mut min_d = f64::INFINITY;
            for i in 0..sel.len() {
                for j in 0..i {
                    let (a, b) = (candidates[sel[i]], candidates[sel[j]]);
                    min_d = min_d.min(((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt());
                }
            }
            prop_assert!(min_d <= prev + 1e-12);
            prev = min_d;
        }
    }

    #[test]
    fn nuiv_roundtrip_bit_exact(
        dims in (1usize..12, 1usize..12, 1usize..12),
        seed in any::<u64>(),
    ) {
        let mut grid = OccupancyGrid::new(dims.0, dims.1, dims.2).unwrap();
        let mut rng = vecscene_core::rng::Rng::new(seed);
        for i in 0..grid.voxel_count() {
            grid.set_linear(i, rng.next_f64() < 0.5);
        }
        let mut buf = Vec::new();
        nuiv::write_nuiv(&grid, &mut buf).unwrap();
        let back = nuiv::read_nuiv(&mut buf.as_slice()).unwrap();
        prop_assert_eq!(&grid, &back);
        let mut buf2 = Vec::new();
        nuiv::write_nuiv(&back, &mut buf2).unwrap();
        prop_assert_eq!(buf, buf2);
    }

    #[test]
    fn iou_bounded_by_size_ratio(
        labels in prop::collection::vec((any::<bool>(), any::<bool>()), 1..100),
    ) {
        let a: Vec<bool> = labels.iter().map(|&(x, _)| x).collect();
        let b: Vec<bool> = labels.iter().map(|&(_, y)| y).collect();
        let v = iou(&a, &b);
        prop_assert!((0.0..=1.0).contains(&v));
        let na = a.iter().filter(|&&x| x).count();
        let nb = b.iter().filter(|&&x| x).count();
        if na.min(nb) > 0 {
            prop_assert!(v <= na.min(nb) as f64 / na.max(nb) as f64 + 1e-12);
        }
        prop_assert_eq!(iou(&a, &a), 1.0);
    }

    #[test]
    fn flood_fill_monotone_and_idempotent(
        seed in any::<u64>(),
        density in 0.1f64..0.7,
    ) {
        let mut grid = OccupancyGrid::new(8, 8, 8).unwrap();
        let mut rng = vecscene_core::rng::Rng::new(seed);
        for i in 0..grid.voxel_count() {
            grid.set_linear(i, rng.next_f64() < density);
        }
        let filled = flood_fill_solid(&grid);
        for i in 0..grid.voxel_count() {
            prop_assert!(!grid.get_linear(i) || filled.get_linear(i), "occupancy removed");
        }
        prop_assert_eq!(flood_fill_solid(&filled), filled);
    }

    #[test]
    fn fourier_pe_width_formula(
        n in 1usize..20,
        n_freq in 1usize..10,
    ) {
        let coords = Tensor::<f64>::zeros(vec![n, 3]);
        let pe = fourier_pe(&coords, n_freq);
        prop_assert_eq!(pe.shape(), &[n, fourier_width(3, n_freq)]);
        prop_assert_eq!(pe.cols(), 3 + 6 * n_freq);
    }
}
