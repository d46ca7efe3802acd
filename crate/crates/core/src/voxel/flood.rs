//! Solidification passes: boundary flood fill and ground fixing.

use std::collections::VecDeque;

use super::OccupancyGrid;
use crate::error::{Error, Result};

/// Fills every empty voxel that has no 6-connected path of empty voxels to
/// the grid boundary. Occupied voxels are never removed; runs to fixpoint.
pub fn flood_fill_solid(grid: &OccupancyGrid) -> OccupancyGrid {
    let (nx, ny, nz) = grid.dims();
    let n = grid.voxel_count();
    // reachable = empty voxels connected to the boundary
    let mut reachable = vec![false; n];
    let mut queue: VecDeque<(usize, usize, usize)> = VecDeque::new();

    let try_seed = |x: usize, y: usize, z: usize, reachable: &mut Vec<bool>, queue: &mut VecDeque<(usize, usize, usize)>| {
        let i = grid.index(x, y, z);
        if !grid.get_linear(i) && !reachable[i] {
            reachable[i] = true;
            queue.push_back((x, y, z));
        }
    };

    for x in 0..nx {
        for y in 0..ny {
            try_seed(x, y, 0, &mut reachable, &mut queue);
            try_seed(x, y, nz - 1, &mut reachable, &mut queue);
        }
    }
    for x in 0..nx {
        for z in 0..nz {
            try_seed(x, 0, z, &mut reachable, &mut queue);
            try_seed(x, ny - 1, z, &mut reachable, &mut queue);
        }
    }
    for y in 0..ny {
        for z in 0..nz {
            try_seed(0, y, z, &mut reachable, &mut queue);
            try_seed(nx - 1, y, z, &mut reachable, &mut queue);
        }
    }

    while let Some((x, y, z)) = queue.pop_front() {
        let visit = |x: usize, y: usize, z: usize, reachable: &mut Vec<bool>, queue: &mut VecDeque<(usize, usize, usize)>| {
            let i = grid.index(x, y, z);
            if !grid.get_linear(i) && !reachable[i] {
                reachable[i] = true;
                queue.push_back((x, y, z));
            }
        };
        if x > 0 {
            visit(x - 1, y, z, &mut reachable, &mut queue);
        }
        if x + 1 < nx {
            visit(x + 1, y, z, &mut reachable, &mut queue);
        }
        if y > 0 {
            visit(x, y - 1, z, &mut reachable, &mut queue);
        }
        if y + 1 < ny {
            visit(x, y + 1, z, &mut reachable, &mut queue);
        }
        if z > 0 {
            visit(x, y, z - 1, &mut reachable, &mut queue);
        }
        if z + 1 < nz {
            visit(x, y, z + 1, &mut reachable, &mut queue);
        }
    }

    let mut out = grid.clone();
    for (i, &r) in reachable.iter().enumerate() {
        if !r {
            out.set_linear(i, true);
        }
    }
    out
}

/// Exclusive top of the lowest ground slab: the first y layer with at least
/// 50% (x,z) coverage whose next layer drops below 50%, plus one.
pub fn detect_ground_level(grid: &OccupancyGrid) -> Option<usize> {
    let (nx, ny, nz) = grid.dims();
    let columns = nx * nz;
    let coverage = |y: usize| {
        let mut covered = 0usize;
        for x in 0..nx {
            for z in 0..nz {
                if grid.get(x, y, z) {
                    covered += 1;
                }
            }
        }
        covered * 2 >= columns
    };
    let mut seen = false;
    for y in 0..ny {
        if coverage(y) {
            seen = true;
        } else if seen {
            return Some(y);
        }
    }
    if seen {
        Some(ny)
    } else {
        None
    }
}

/// Occupies a uniform 5-voxel slab below `ground_level` in every column;
/// voxels at and above `ground_level` are untouched.
pub const GROUND_THICKNESS: usize = 5;

pub fn fix_ground(grid: &OccupancyGrid, ground_level: usize) -> Result<OccupancyGrid> {
    if ground_level < GROUND_THICKNESS {
        return Err(Error::invalid(format!(
            "ground_level {ground_level} cannot hold {GROUND_THICKNESS} ground layers"
        )));
    }
    let (nx, ny, nz) = grid.dims();
    if ground_level > ny {
        return Err(Error::bounds(format!("ground_level {ground_level} exceeds grid height {ny}")));
    }
    let mut out = grid.clone();
    for x in 0..nx {
        for z in 0..nz {
            for y in ground_level - GROUND_THICKNESS..ground_level {
                out.set(x, y, z, true);
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hollow_shell(side: usize) -> OccupancyGrid {
        let mut g = OccupancyGrid::new(side, side, side).unwrap();
        for x in 0..side {
            for y in 0..side {
                for z in 0..side {
                    let surface = x == 0 || y == 0 || z == 0 || x == side - 1 || y == side - 1 || z == side - 1;
                    g.set(x, y, z, surface);
                }
            }
        }
        g
    }

    /// Independent oracle: iterate "empty voxel next to outside-empty stays
    /// empty" to a fixpoint, seeding from the boundary.
    fn flood_oracle(grid: &OccupancyGrid) -> OccupancyGrid {
        let (nx, ny, nz) = grid.dims();
        let mut outside = vec![false; grid.voxel_count()];
        let mut changed = true;
        while changed {
            changed = false;
            for x in 0..nx {
                for y in 0..ny {
                    for z in 0..nz {
                        let i = grid.index(x, y, z);
                        if grid.get_linear(i) || outside[i] {
                            continue;
                        }
                        let on_boundary = x == 0 || y == 0 || z == 0 || x == nx - 1 || y == ny - 1 || z == nz - 1;
                        let mut next_to_outside = on_boundary;
                        let mut check = |xx: usize, yy: usize, zz: usize| {
                            if outside[grid.index(xx, yy, zz)] {
                                next_to_outside = true;
                            }
                        };
                        if x > 0 {
                            check(x - 1, y, z);
                        }
                        if x + 1 < nx {
                            check(x + 1, y, z);
                        }
                        if y > 0 {
                            check(x, y - 1, z);
                        }
                        if y + 1 < ny {
                            check(x, y + 1, z);
                        }
                        if z > 0 {
                            check(x, y, z - 1);
                        }
                        if z + 1 < nz {
                            check(x, y, z + 1);
                        }
                        if next_to_outside {
                            outside[i] = true;
                            changed = true;
                        }
                    }
                }
            }
        }
        let mut out = grid.clone();
        for (i, &o) in outside.iter().enumerate() {
            if !o {
                out.set_linear(i, true);
            }
        }
        out
    }

    #[test]
    fn hollow_shell_becomes_solid() {
        let filled = flood_fill_solid(&hollow_shell(5));
        assert_eq!(filled.occupied_count(), 125);
    }

    #[test]
    fn fully_occupied_grid_unchanged() {
        let mut g = OccupancyGrid::new(4, 4, 4).unwrap();
        for i in 0..g.voxel_count() {
            g.set_linear(i, true);
        }
        assert_eq!(flood_fill_solid(&g), g);
    }

    #[test]
    fn corner_void_touching_boundary_stays_empty() {
        let mut g = OccupancyGrid::new(4, 4, 4).unwrap();
        for i in 0..g.voxel_count() {
            g.set_linear(i, true);
        }
        g.set(0, 0, 0, false);
        assert_eq!(flood_fill_solid(&g), g);
    }

    #[test]
    fn idempotent_monotone_and_matches_oracle_on_random_grids() {
        let mut rng = crate::rng::Rng::new(99);
        for _ in 0..100 {
            let mut g = OccupancyGrid::new(16, 16, 16).unwrap();
            for i in 0..g.voxel_count() {
                g.set_linear(i, rng.next_f64() < 0.35);
            }
            let once = flood_fill_solid(&g);
            // monotone: never removes occupancy
            for i in 0..g.voxel_count() {
                assert!(!g.get_linear(i) || once.get_linear(i));
            }
            // idempotent
            assert_eq!(flood_fill_solid(&once), once);
            // equals the independent relaxation oracle
            assert_eq!(once, flood_oracle(&g));
        }
    }

    #[test]
    fn fix_ground_counts() {
        let g = OccupancyGrid::new(6, 10, 7).unwrap();
        let fixed = fix_ground(&g, 5).unwrap();
        assert_eq!(fixed.occupied_count(), 5 * 6 * 7);
        // idempotent on already occupied ground
        let again = fix_ground(&fixed, 5).unwrap();
        assert_eq!(again, fixed);
    }

    #[test]
    fn fix_ground_preserves_towers() {
        let mut g = OccupancyGrid::new(6, 12, 6).unwrap();
        // tower above the ground level
        for y in 5..11 {
            g.set(3, y, 3, true);
        }
        let fixed = fix_ground(&g, 5).unwrap();
        // tower untouched
        for y in 5..11 {
            assert!(fixed.get(3, 3.min(5), 3) || fixed.get(3, y, 3));
        }
        // set-difference vs input is exactly the ground slab
        let mut added = 0;
        for x in 0..6 {
            for y in 0..12 {
                for z in 0..6 {
                    if fixed.get(x, y, z) && !g.get(x, y, z) {
                        assert!(y < 5, "added voxel outside ground slab at y={y}");
                        added += 1;
                    }
                }
            }
        }
        assert_eq!(added, 5 * 36);
    }

    #[test]
    fn fix_ground_rejects_thin_ground() {
        let g = OccupancyGrid::new(4, 8, 4).unwrap();
        assert!(fix_ground(&g, 4).is_err());
    }

    #[test]
    fn detect_ground_level_finds_slab_top() {
        let g = OccupancyGrid::new(8, 12, 8).unwrap();
        let fixed = fix_ground(&g, 5).unwrap();
        assert_eq!(detect_ground_level(&fixed), Some(5));
        assert_eq!(detect_ground_level(&g), None);
    }
}
