//! Global object-category vocabulary.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Size of the global vocabulary; semantic maps carry one channel per entry.
pub const K_TOTAL: usize = 24;

pub const CATEGORY_NAMES: [&str; K_TOTAL] = [
    "Desk",
    "CounterTop",
    "Bed",
    "Sofa",
    "DiningTable",
    "Shelf",
    "TVStand",
    "Dresser",
    "Laptop",
    "Apple",
    "Box",
    "AlarmClock",
    "Pillow",
    "Television",
    "Book",
    "Mug",
    "Bowl",
    "RemoteControl",
    "Vase",
    "CellPhone",
    "HousePlant",
    "FloorLamp",
    "GarbageCan",
    "Painting",
];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CategoryId(pub u8);

impl CategoryId {
    pub fn index(self) -> usize {
        self.0 as usize
    }

    pub fn name(self) -> &'static str {
        CATEGORY_NAMES[self.index()]
    }

    pub fn from_name(name: &str) -> Result<Self> {
        CATEGORY_NAMES
            .iter()
            .position(|n| *n == name)
            .map(|i| CategoryId(i as u8))
            .ok_or_else(|| Error::UnknownCategory(name.to_string()))
    }

    pub fn all() -> impl Iterator<Item = CategoryId> {
        (0..K_TOTAL as u8).map(CategoryId)
    }
}

impl fmt::Display for CategoryId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Categories designated as training targets (the "known" split): the first
/// 70% of a fixed permutation of the vocabulary.
pub fn known_target_categories() -> Vec<CategoryId> {
    let mut ids: Vec<CategoryId> = CategoryId::all().collect();
    // Fixed stride permutation so the split mixes large and small objects.
    ids.sort_by_key(|c| (c.index() * 7) % K_TOTAL);
    let n_known = (K_TOTAL * 7).div_ceil(10);
    let mut known = ids[..n_known].to_vec();
    known.sort();
    known
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_round_trip() {
        for c in CategoryId::all() {
            assert_eq!(CategoryId::from_name(c.name()).unwrap(), c);
        }
        assert!(matches!(
            CategoryId::from_name("Toaster"),
            Err(Error::UnknownCategory(n)) if n == "Toaster"
        ));
    }

    #[test]
    fn known_split_is_seventy_percent() {
        let known = known_target_categories();
        assert_eq!(known.len(), 17);
        let mut dedup = known.clone();
        dedup.dedup();
        assert_eq!(dedup.len(), known.len());
    }
}
