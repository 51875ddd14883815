"""Build a shape model from synthetic subjects and use it.

    python demos/model_tour.py [--subjects 12]

The subjects share one grid, so they are already in correspondence and no
registration is needed here. The script prints the metric curves, completes
a shape whose breast region is hidden, and edits one subject's bump height.
"""

import argparse

import numpy as np

from breastssm.apps import FeatureMatrix, edit, fit_edit_map, posterior_predict
from breastssm.masks import mask_for
from breastssm.metrics import model_curves
from breastssm.model import build, gpa, reconstruct, sample
from breastssm.synth import BREAST_MODES, THORAX_MODES, SubjectParams, Variation, generate_dataset


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--subjects", type=int, default=12)
    args = ap.parse_args()
    base = SubjectParams(n_theta=31, n_height=31)
    subjects = generate_dataset(args.subjects, Variation(modes=BREAST_MODES + THORAX_MODES), seed=1, base=base)
    shapes = gpa([s.mesh.vertices for s in subjects]).aligned
    model = build(shapes, subjects[0].mesh.faces)
    print(f"{model.q} components from {len(shapes)} shapes")
    print(" m  compactness  generalization  specificity")
    for r in model_curves(model, shapes, samples=50):
        print(f"{r['m']:2d}  {r['compactness']:11.4f}  {r['generalization']:11.3f} mm  {r['specificity']:8.3f} mm")

    # hide the left breast of a held-out subject and complete it from the rest
    held = generate_dataset(1, Variation(modes=BREAST_MODES + THORAX_MODES), seed=99, base=base)[0].mesh
    mask = mask_for(held, squared_axes=True)
    missing = np.nonzero((mask >= 0.5 * mask.max()) & (held.vertices[:, 0] > 0))[0]
    pred = posterior_predict(model, held.vertices, missing, sigma2=0.01, align=True).reshape(-1, 3)
    err = np.linalg.norm(pred[missing] - held.vertices[missing], axis=1).mean()
    # an enormous noise level ignores the observations and returns the posed mean shape
    prior = posterior_predict(model, held.vertices, missing, sigma2=1e12, align=True).reshape(-1, 3)
    base_err = np.linalg.norm(prior[missing] - held.vertices[missing], axis=1).mean()
    print(f"\ncompletion of {len(missing)} hidden vertices: {err:.2f} mm (posed mean shape: {base_err:.2f} mm)")

    # map bump amplitudes to coefficients and raise one subject's left bump
    feats = FeatureMatrix.from_table([[s.params.amp_L, s.params.amp_R] for s in subjects], ["amp_L", "amp_R"])
    A = np.stack([reconstruct(model, x) for x in shapes], axis=1)
    emap = fit_edit_map(A, feats)
    alpha = A[:, 0]
    before, after = sample(model, alpha), sample(model, edit(model, emap, alpha, [10.0, 0.0]))
    shift = np.linalg.norm((after - before).reshape(-1, 3), axis=1)
    print(f"\nedit amp_L +10 mm: largest vertex shift {shift.max():.2f} mm "
          f"at x = {before.reshape(-1, 3)[np.argmax(shift), 0]:.0f} mm (left side is +x)")


if __name__ == "__main__":
    main()
