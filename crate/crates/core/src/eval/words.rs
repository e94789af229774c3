//! Vocabulary for generated facts.

/// Lowercase single words, disjoint from object categories and room names.
pub(crate) const WORDS: [&str; 145] = [
    "amber", "anchor", "apple", "arch", "autumn", "badge", "bamboo", "banner", "barley",
    "basil", "beach", "beacon", "berry", "birch", "blossom", "bridge", "brook", "bubble",
    "cabin", "cactus", "canyon", "carbon", "castle", "cedar", "chalk", "cherry", "cider",
    "citrus", "clover", "cobalt", "comet", "copper", "coral", "cotton", "crater", "crystal",
    "daisy", "delta", "desert", "dune", "eagle", "echo", "ember", "falcon", "fern", "fiesta",
    "flint", "forest", "fossil", "galaxy", "garden", "garnet", "ginger", "glacier", "granite",
    "grove", "harbor", "hazel", "hollow", "honey", "horizon", "island", "ivory", "jasmine",
    "jungle", "kettle", "lagoon", "lantern", "lava", "lemon", "lilac", "linen", "lotus",
    "lunar", "maple", "marble", "meadow", "melon", "mint", "mosaic", "nectar", "nimbus",
    "oasis", "ocean", "olive", "onyx", "orbit", "orchid", "panda", "pebble", "pepper", "pine",
    "planet", "plum", "prism", "poppy", "prairie", "quartz", "quill", "rain", "raven", "reef",
    "ridge", "river", "ruby", "saffron", "sage", "salmon", "sapphire", "shadow", "sierra",
    "silver", "sky", "slate", "snow", "solar", "spruce", "storm", "summit", "sunset", "thistle",
    "thunder", "tide", "timber", "topaz", "tulip", "tundra", "valley", "velvet", "violet",
    "walnut", "willow", "winter", "zephyr", "acorn", "alpine", "aurora", "bison", "breeze",
    "canvas", "circus", "compass", "dragon", "fable", "harvest",
];
