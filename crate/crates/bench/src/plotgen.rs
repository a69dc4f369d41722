//! Plot-script emission. The runner writes `{name}_plot.py`, a standalone
//! matplotlib script that reads the aggregate CSVs next to it and renders
//! mean relative error with a +/- one-std band per solver, against
//! iterations and (when timed) wall-clock seconds.

pub fn plot_script(name: &str, has_time: bool) -> String {
    let time_panel = if has_time {
        format!(
            r#"
rows = read_rows("{name}_time_aggregate.csv")
ax = axes[1]
for solver in ordered(rows):
    t = column(rows, solver, "time_s")
    m = column(rows, solver, "mean_rel_error")
    s = column(rows, solver, "std_rel_error")
    ax.plot(t, m, label=solver)
    ax.fill_between(t, sub(m, s), add(m, s), alpha=0.2)
ax.set_xlabel("elapsed (s)")
ax.set_xscale("log")
ax.set_yscale("log")
ax.legend()
"#
        )
    } else {
        String::new()
    };
    let panels = if has_time { 2 } else { 1 };
    format!(
        r#"#!/usr/bin/env python3
"""Render {name} benchmark curves from the aggregate CSVs in this directory."""
import csv
import math
import os

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

HERE = os.path.dirname(os.path.abspath(__file__))


def read_rows(filename):
    with open(os.path.join(HERE, filename), newline="") as fh:
        return list(csv.DictReader(fh))


def ordered(rows):
    seen = []
    for row in rows:
        if row["solver"] not in seen:
            seen.append(row["solver"])
    return seen


def column(rows, solver, field):
    out = []
    for row in rows:
        if row["solver"] == solver:
            v = float(row[field])
            out.append(v if math.isfinite(v) else float("nan"))
    return out


def add(xs, ys):
    return [x + y for x, y in zip(xs, ys)]


def sub(xs, ys):
    return [max(x - y, 1e-300) for x, y in zip(xs, ys)]


fig, axes = plt.subplots(1, {panels}, figsize=({width}, 4.2), squeeze=False)
axes = axes[0]

rows = read_rows("{name}_aggregate.csv")
ax = axes[0]
for solver in ordered(rows):
    it = column(rows, solver, "iter")
    m = column(rows, solver, "mean_rel_error")
    s = column(rows, solver, "std_rel_error")
    ax.plot(it, m, label=solver)
    ax.fill_between(it, sub(m, s), add(m, s), alpha=0.2)
ax.set_xlabel("iteration")
ax.set_ylabel("relative error")
ax.set_yscale("log")
ax.legend()
{time_panel}
fig.suptitle("{name}")
fig.tight_layout()
out = os.path.join(HERE, "{name}.png")
fig.savefig(out, dpi=150)
print(out)
"#,
        name = name,
        panels = panels,
        width = if has_time { "10.5" } else { "5.5" },
        time_panel = time_panel,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn script_references_the_aggregates_it_plots() {
        let s = plot_script("matrec", true);
        assert!(s.contains("matrec_aggregate.csv"));
        assert!(s.contains("matrec_time_aggregate.csv"));
        assert!(s.contains("mean_rel_error"));
        assert!(s.contains("std_rel_error"));
        assert!(s.starts_with("#!/usr/bin/env python3"));
    }

    #[test]
    fn untimed_runs_get_a_single_panel() {
        let s = plot_script("demo", false);
        assert!(s.contains("demo_aggregate.csv"));
        assert!(!s.contains("time_aggregate"));
        assert!(s.contains("subplots(1, 1"));
    }
}
