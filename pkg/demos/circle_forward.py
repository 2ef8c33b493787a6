"""Scattering from a PEC circle: MoM solution against the cylinder series.

Prints the relative error for a few contour discretizations, showing the
forward solver converge as the cells shrink.

    python3 demos/circle_forward.py
"""

import numpy as np

from imsasom.analytic import pec_cylinder_field
from imsasom.forward import reference_setup, solve_forward
from imsasom.shapes import ShapeSpec

setup = reference_setup()
lam = setup.wavelength
shape = ShapeSpec("circle", radius=0.5 * lam)
reference = pec_cylinder_field(setup, shape.radius)

print(f"{setup.V} views, {setup.M} probes, circle radius 0.5 wavelengths")
for cells in (20, 30, 50, 80):
    E = solve_forward(shape, setup, cells)
    err = np.linalg.norm(E - reference) / np.linalg.norm(reference)
    print(f"  lambda/{cells:<3d} contour cells: relative error {err:.2e}")
