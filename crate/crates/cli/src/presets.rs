//! Named experiments. Each preset is a set of `key = value` defaults plus the
//! command it belongs to.

use crate::config::Command;

pub struct Preset {
    pub name: &'static str,
    pub command: Command,
    pub entries: &'static [(&'static str, &'static str)],
}

const OVERDAMPED_HS: &str = "2^-4..2^-9";
const INERTIAL_HS: &str = "2^-2..2^-6";

pub const PRESETS: &[Preset] = &[
    Preset {
        name: "fig1",
        command: Command::Trajectory,
        entries: &[
            ("potential", "quartic"),
            ("beta", "1"),
            ("method", "ula,mala"),
            ("h", "0.3125"),
            ("n_steps", "100"),
            ("x0", "4"),
            ("seed", "1"),
        ],
    },
    Preset {
        name: "fig2",
        command: Command::Trajectory,
        entries: &[
            ("potential", "quartic"),
            ("beta", "0.01"),
            ("method", "mala"),
            ("h", "0.3125"),
            ("n_steps", "10000"),
            ("x0", "4"),
            ("seed", "2"),
        ],
    },
    Preset {
        name: "zero",
        command: Command::Trajectory,
        entries: &[
            ("potential", "zero"),
            ("beta", "1"),
            ("method", "mala"),
            ("h", "0.1"),
            ("n_steps", "100"),
            ("x0", "0"),
            ("seed", "3"),
        ],
    },
    Preset {
        name: "fig3",
        command: Command::Converge,
        entries: &[
            ("potential", "quartic"),
            ("beta", "1"),
            ("method", "mala"),
            ("T", "1"),
            ("hs", OVERDAMPED_HS),
            ("initial", "equilibrium"),
            ("realizations", "10000"),
            ("seed", "2024"),
        ],
    },
    Preset {
        name: "fig4",
        command: Command::Converge,
        entries: &[
            ("potential", "quartic"),
            ("beta", "1"),
            ("method", "malta"),
            ("T", "1"),
            ("hs", OVERDAMPED_HS),
            ("initial", "fixed"),
            ("x0", "0.1"),
            ("realizations", "10000"),
            ("seed", "2024"),
        ],
    },
    Preset {
        name: "fig5",
        command: Command::Converge,
        entries: &[
            ("potential", "quartic"),
            ("beta", "1"),
            ("gamma", "1"),
            ("mass", "1"),
            ("method", "magla"),
            ("T", "1"),
            ("hs", INERTIAL_HS),
            ("initial", "fixed"),
            ("q0", "0.1"),
            ("p0", "0"),
            ("realizations", "10000"),
            ("seed", "2024"),
        ],
    },
    Preset {
        name: "ergodicity-mala",
        command: Command::Ergodicity,
        entries: &[
            ("potential", "quartic"),
            ("beta", "1"),
            ("method", "mala"),
            ("h", "0.1"),
            ("n_steps", "1000000"),
            ("x0", "0"),
            ("bins", "100"),
            ("seed", "5"),
        ],
    },
    Preset {
        name: "ergodicity-magla",
        command: Command::Ergodicity,
        entries: &[
            ("potential", "quartic"),
            ("beta", "1"),
            ("gamma", "1"),
            ("mass", "1"),
            ("method", "magla"),
            ("h", "0.25"),
            ("n_steps", "1000000"),
            ("q0", "0.1"),
            ("p0", "0"),
            ("bins", "100"),
            ("seed", "6"),
        ],
    },
    Preset {
        name: "ergodicity-ula",
        command: Command::Ergodicity,
        entries: &[
            ("potential", "quartic"),
            ("beta", "1"),
            ("method", "ula"),
            ("h", "0.3125"),
            ("n_steps", "1000000"),
            ("x0", "4"),
            ("bins", "100"),
            ("seed", "7"),
        ],
    },
    Preset {
        name: "reject-mala",
        command: Command::RejectRate,
        entries: &[
            ("potential", "quartic"),
            ("beta", "1"),
            ("method", "mala"),
            ("hs", "2^-3..2^-7"),
            ("n_steps", "100"),
            ("realizations", "2000"),
            ("initial", "equilibrium"),
            ("seed", "8"),
        ],
    },
    Preset {
        name: "reject-magla",
        command: Command::RejectRate,
        entries: &[
            ("potential", "quartic"),
            ("beta", "1"),
            ("gamma", "1"),
            ("mass", "1"),
            ("method", "magla"),
            ("hs", "2^-2..2^-5"),
            ("n_steps", "100"),
            ("realizations", "2000"),
            ("initial", "equilibrium"),
            ("seed", "9"),
        ],
    },
];

/// Alternative names for presets.
const ALIASES: &[(&str, &str)] = &[("mala", "fig3"), ("malta", "fig4"), ("magla", "fig5")];

pub fn find(name: &str) -> Option<&'static Preset> {
    let name = ALIASES.iter().find(|(a, _)| *a == name).map_or(name, |(_, target)| target);
    PRESETS.iter().find(|p| p.name == name)
}

pub fn names() -> Vec<&'static str> {
    PRESETS.iter().map(|p| p.name).chain(ALIASES.iter().map(|(a, _)| *a)).collect()
}
