//! Named experiments, written in the same TOML format users write.

pub struct Builtin {
    pub name: &'static str,
    pub description: &'static str,
    pub toml: &'static str,
}

macro_rules! fixed_band_rates {
    ($name:literal, $alpha:literal) => {
        concat!(
            "[[experiment]]\nname = \"",
            $name,
            "\"\npolicies = [\"fbfp\", \"fbdp\"]\n",
            "sweep = { parameter = \"config\", values = [0, 1, 2, 3, 4, 5, 6] }\n",
            "[experiment.world]\nn_slots = 10000\nn_trials = 10\nseed = 5\n",
            "bands = [{ alpha = ",
            $alpha,
            ", config = 0 }]\n"
        )
    };
}

macro_rules! fixed_power_table {
    ($alpha:literal) => {
        concat!(
            "[[experiment]]\nname = \"fig7_alpha_",
            $alpha,
            "\"\nreport = \"fixed_power\"\nsimulate = false\n",
            "sweep = { parameter = \"config\", values = [0, 1, 2, 3, 4, 5, 6] }\n",
            "[experiment.world]\nbands = [{ alpha = ",
            $alpha,
            ", config = 0 }]\n\n"
        )
    };
}

macro_rules! four_band {
    ($head:literal) => {
        concat!(
            $head,
            "[experiment.world]\nn_slots = 25000\nn_trials = 4\nseed = 8\n",
            "bands = [\n",
            "  { alpha = 0.9938, config = 0 },\n",
            "  { alpha = 0.9938, config = 3 },\n",
            "  { alpha = 0.9938, config = 4 },\n",
            "  { alpha = 0.9938, config = 5 },\n",
            "]\n"
        )
    };
}

pub const BUILTINS: &[Builtin] = &[
    Builtin {
        name: "table1",
        description: "mean reversal time of the seven builtin traffic configs",
        toml: "[[experiment]]
name = \"table1\"
report = \"reversal_time\"
simulate = false
sweep = { parameter = \"config\", values = [0, 1, 2, 3, 4, 5, 6] }
[experiment.world]
bands = [{ alpha = 0.9938, config = 0 }]
",
    },
    Builtin {
        name: "fig5a",
        description: "fixed vs dynamic power on one band, all configs, alpha 0.9755 (50 Hz)",
        toml: fixed_band_rates!("fig5a", "0.9755"),
    },
    Builtin {
        name: "fig5b",
        description: "fixed vs dynamic power on one band, all configs, alpha 0.9938 (25 Hz)",
        toml: fixed_band_rates!("fig5b", "0.9938"),
    },
    Builtin {
        name: "fig6",
        description: "fixed vs dynamic power on one band, all configs, alpha 0.9998 (5 Hz)",
        toml: fixed_band_rates!("fig6", "0.9998"),
    },
    Builtin {
        name: "fig7",
        description: "fixed power per config over the alpha grid",
        toml: concat!(
            fixed_power_table!("0.9755"),
            fixed_power_table!("0.9876"),
            fixed_power_table!("0.9938"),
            fixed_power_table!("0.9998")
        ),
    },
    Builtin {
        name: "fig8",
        description: "six policies on four bands (configs 0, 3, 4, 5), alpha sweep",
        toml: four_band!(
            "[[experiment]]
name = \"fig8\"
policies = [\"fbfp\", \"fbdp\", \"random\", \"round_robin\", \"dsee\", \"clairvoyant\"]
sweep = { parameter = \"alpha\", values = [0.9755, 0.9876, 0.9938, 0.9998] }
"
        ),
    },
    Builtin {
        name: "fig9",
        description: "clairvoyant gain over fixed band/power and its bound vs alpha",
        toml: four_band!(
            "[[experiment]]
name = \"fig9\"
policies = [\"fbfp\", \"clairvoyant\"]
sweep = { parameter = \"alpha\", values = [0.9755, 0.9876, 0.9938, 0.9998] }
"
        ),
    },
    Builtin {
        name: "fig10",
        description: "clairvoyant gain and bound vs secondary antenna count",
        toml: four_band!(
            "[[experiment]]
name = \"fig10\"
policies = [\"fbfp\", \"clairvoyant\"]
sweep = { parameter = \"m_s\", values = [2, 4, 6, 8] }
"
        ),
    },
];

pub fn find(name: &str) -> Option<&'static Builtin> {
    BUILTINS.iter().find(|b| b.name == name)
}
