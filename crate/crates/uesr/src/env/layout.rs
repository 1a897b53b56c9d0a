//! Grid layouts and their shifted variants.
//!
//! Coordinates are (x, y) with x in 0..width and y in 0..height; y grows
//! downward in the rendered view. A tile is a "highway" exactly when it is
//! not a shelf home; shelves can only be put down on shelf-home tiles.

use std::collections::BTreeSet;

pub type Tile = (i32, i32);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayoutVariant {
    Training,
    GoalShift,
    ShelfShift,
}

impl LayoutVariant {
    pub fn name(self) -> &'static str {
        match self {
            LayoutVariant::Training => "training",
            LayoutVariant::GoalShift => "goal_shift",
            LayoutVariant::ShelfShift => "shelf_shift",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "training" => Some(LayoutVariant::Training),
            "goal_shift" => Some(LayoutVariant::GoalShift),
            "shelf_shift" => Some(LayoutVariant::ShelfShift),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GridLayout {
    pub width: i32,
    pub height: i32,
    pub shelf_home_tiles: BTreeSet<Tile>,
    pub goal_tiles: BTreeSet<Tile>,
    pub variant: LayoutVariant,
}

impl GridLayout {
    /// Base 10x11 map: four 2x3 shelf blocks around a central corridor and
    /// two goal tiles on the bottom edge.
    pub fn training() -> Self {
        let shelf_homes = shelf_blocks(&[2, 3, 6, 7]);
        let goals = [(4, 10), (5, 10)];
        GridLayout::build(10, 11, shelf_homes, goals.into(), LayoutVariant::Training)
    }

    /// Training map plus two extra goal tiles on the opposite (top) edge.
    pub fn goal_shift() -> Self {
        let shelf_homes = shelf_blocks(&[2, 3, 6, 7]);
        let goals = [(4, 10), (5, 10), (4, 0), (5, 0)];
        GridLayout::build(10, 11, shelf_homes, goals.into(), LayoutVariant::GoalShift)
    }

    /// Shelf blocks pushed flush against the side walls, so the wall-side
    /// column of each block is reachable only past the inner column.
    pub fn shelf_shift() -> Self {
        let shelf_homes = shelf_blocks(&[0, 1, 8, 9]);
        let goals = [(4, 10), (5, 10)];
        GridLayout::build(10, 11, shelf_homes, goals.into(), LayoutVariant::ShelfShift)
    }

    pub fn variant(variant: LayoutVariant) -> Self {
        match variant {
            LayoutVariant::Training => GridLayout::training(),
            LayoutVariant::GoalShift => GridLayout::goal_shift(),
            LayoutVariant::ShelfShift => GridLayout::shelf_shift(),
        }
    }

    /// Arbitrary layout for tests and small experiments. Panics if the
    /// shelf homes and goals overlap or fall out of bounds.
    pub fn custom(
        width: i32,
        height: i32,
        shelf_home_tiles: BTreeSet<Tile>,
        goal_tiles: BTreeSet<Tile>,
    ) -> Self {
        GridLayout::build(
            width,
            height,
            shelf_home_tiles,
            goal_tiles,
            LayoutVariant::Training,
        )
    }

    fn build(
        width: i32,
        height: i32,
        shelf_home_tiles: BTreeSet<Tile>,
        goal_tiles: BTreeSet<Tile>,
        variant: LayoutVariant,
    ) -> Self {
        let layout = GridLayout {
            width,
            height,
            shelf_home_tiles,
            goal_tiles,
            variant,
        };
        for &t in layout.shelf_home_tiles.iter().chain(&layout.goal_tiles) {
            assert!(layout.in_bounds(t), "tile {t:?} out of bounds");
        }
        assert!(
            layout
                .shelf_home_tiles
                .intersection(&layout.goal_tiles)
                .next()
                .is_none(),
            "shelf homes and goals must be disjoint"
        );
        layout
    }

    pub fn in_bounds(&self, (x, y): Tile) -> bool {
        x >= 0 && x < self.width && y >= 0 && y < self.height
    }

    /// Highways are exactly the non-shelf-home tiles.
    pub fn is_highway(&self, tile: Tile) -> bool {
        self.in_bounds(tile) && !self.shelf_home_tiles.contains(&tile)
    }

    pub fn is_shelf_home(&self, tile: Tile) -> bool {
        self.shelf_home_tiles.contains(&tile)
    }

    pub fn is_goal(&self, tile: Tile) -> bool {
        self.goal_tiles.contains(&tile)
    }

    /// All tiles in reading order (y outer, x inner).
    pub fn tiles(&self) -> impl Iterator<Item = Tile> + '_ {
        (0..self.height).flat_map(move |y| (0..self.width).map(move |x| (x, y)))
    }

    /// Highway tiles in reading order; the canonical candidate list for
    /// every placement draw.
    pub fn highway_tiles(&self) -> Vec<Tile> {
        self.tiles().filter(|&t| self.is_highway(t)).collect()
    }
}

/// Two 2x3 shelf blocks per column pair: y in 2..=4 and y in 6..=8.
fn shelf_blocks(xs: &[i32]) -> BTreeSet<Tile> {
    let mut tiles = BTreeSet::new();
    for &x in xs {
        for y in 2..=4 {
            tiles.insert((x, y));
        }
        for y in 6..=8 {
            tiles.insert((x, y));
        }
    }
    tiles
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn training_counts() {
        let l = GridLayout::training();
        assert_eq!(l.shelf_home_tiles.len(), 24);
        assert_eq!(l.goal_tiles.len(), 2);
        assert_eq!((l.width, l.height), (10, 11));
    }

    #[test]
    fn goal_shift_strictly_extends_training_goals() {
        let t = GridLayout::training();
        let g = GridLayout::goal_shift();
        assert!(g.goal_tiles.is_superset(&t.goal_tiles));
        assert!(g.goal_tiles.len() > t.goal_tiles.len());
        assert_eq!(g.shelf_home_tiles, t.shelf_home_tiles);
    }

    #[test]
    fn shelf_shift_hugs_the_walls() {
        let s = GridLayout::shelf_shift();
        assert_eq!(s.shelf_home_tiles.len(), 24);
        assert!(s
            .shelf_home_tiles
            .iter()
            .all(|&(x, _)| x <= 1 || x >= s.width - 2));
        // Wall columns present on both sides.
        assert!(s.shelf_home_tiles.iter().any(|&(x, _)| x == 0));
        assert!(s.shelf_home_tiles.iter().any(|&(x, _)| x == s.width - 1));
    }

    #[test]
    fn goals_are_highways_and_disjoint_from_homes() {
        for l in [
            GridLayout::training(),
            GridLayout::goal_shift(),
            GridLayout::shelf_shift(),
        ] {
            for &g in &l.goal_tiles {
                assert!(l.is_highway(g));
                assert!(!l.is_shelf_home(g));
            }
            // highway_mask(t) == !shelf_home(t) for every tile.
            for t in l.tiles() {
                assert_eq!(l.is_highway(t), !l.is_shelf_home(t));
            }
        }
    }

    #[test]
    #[should_panic(expected = "disjoint")]
    fn custom_rejects_overlap() {
        let homes: BTreeSet<Tile> = [(1, 1)].into();
        let goals: BTreeSet<Tile> = [(1, 1)].into();
        let _ = GridLayout::custom(3, 3, homes, goals);
    }
}
