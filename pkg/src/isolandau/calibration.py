"""Reference suite for the calibration protocol.

Run ``python -m isolandau.calibration`` to recompute the constants frozen in
``diagnostics.DEFAULT_CALIBRATION``.
"""
from __future__ import annotations

import json
import math

from .diagnostics import Calibration, calibrate
from .dynamics import GridSpec, SimConfig, run


def _ball(radius):
    return (("radius", radius), ("height", 3.0 / (4.0 * math.pi * radius**3)))


REFERENCE_CASES = {
    "maxwellian": ("maxwellian", ()),
    "maxwellian_narrow": ("maxwellian", (("variance", 0.5),)),
    "maxwellian_wide": ("maxwellian", (("variance", 2.0),)),
    "unit_ball": ("uniform_ball", _ball(1.0)),
}

# a profile family the suite never sees
HELD_OUT_CASE = ("uniform_ball", _ball(1.5))


def case_config(init, params, n=512, r_max=12.0, t_end=0.05, stride=10):
    return SimConfig(grid=GridSpec("radial", r_max, n), t_end=t_end, output_stride=stride,
                     cfl_safety=0.5, init=init, init_params=params)


def reference_suite(n=512, t_end=0.05):
    return [run(case_config(init, params, n=n, t_end=t_end))
            for init, params in REFERENCE_CASES.values()]


def calibrate_reference(n=512, t_end=0.05, base: Calibration | None = None) -> Calibration:
    return calibrate(reference_suite(n, t_end), base, source=f"reference suite n={n} t_end={t_end}")


def main():
    print(json.dumps(calibrate_reference().to_dict(), indent=2))


if __name__ == "__main__":
    main()
