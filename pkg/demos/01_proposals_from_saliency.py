"""From a saliency map to an object proposal.

A saliency detector scores each pixel by how likely it belongs to a
foreground object. Thresholding that map gives a binary object proposal;
its tight bounding box defines the crop a feature extractor will embed.
"""

import numpy as np

from unsupseg import binarize_saliency, make_crop_spec, tight_bbox

# A toy 12x12 saliency map: a bright object blob on a dark background,
# plus one speck of sensor noise.
saliency = np.zeros((12, 12), dtype=np.uint8)
saliency[3:9, 4:10] = 210          # the object
saliency[3:9, 4:10] -= np.random.default_rng(0).integers(
    0, 40, (6, 6)).astype(np.uint8)
saliency[11, 0] = 100              # a stray half-salient speck

print("saliency map:")
print(saliency)

# The binary threshold theta is a fraction of full intensity; 0.5 keeps
# pixels brighter than 127.5.
mask = binarize_saliency(saliency, theta=0.5)
print("\nproposal mask (theta=0.5):")
print(mask)

# Raising theta can only shrink the foreground (monotonicity).
for theta in (0.3, 0.5, 0.7, 0.9):
    print(f"theta={theta}: {binarize_saliency(saliency, theta).sum()} fg pixels")

# The crop handed to the feature extractor is the tight box around the
# mask, resized to a square input (bilinear for images).
box = tight_bbox(mask)
spec = make_crop_spec(box, target=256)
print(f"\ntight box: x {box.x0}..{box.x1}, y {box.y0}..{box.y1} "
      f"({box.width}x{box.height} px)")
print(f"crop spec: {spec.to_dict()}")
