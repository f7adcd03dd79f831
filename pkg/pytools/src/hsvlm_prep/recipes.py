"""Frozen recipes for the public benchmark scenes.

The class-name lists are the standard benchmark names; the datasets
themselves ship only numeric labels.
"""

from dataclasses import dataclass

from .errors import DimMismatch


@dataclass(frozen=True)
class DatasetRecipe:
    name: str
    cube_var: str
    gt_var: str
    dims: tuple  # (H, W, D)
    class_names: tuple

    def __post_init__(self):
        if len(set(self.class_names)) != len(self.class_names):
            raise ValueError(f"{self.name}: class names must be unique")

    def check_dims(self, cube_shape, gt_shape):
        if tuple(cube_shape) != self.dims:
            raise DimMismatch(f"{self.name}: cube {tuple(cube_shape)} "
                              f"vs expected {self.dims}")
        if tuple(gt_shape) != self.dims[:2]:
            raise DimMismatch(f"{self.name}: ground truth {tuple(gt_shape)} "
                              f"vs expected {self.dims[:2]}")


RECIPES = {
    "indian_pines": DatasetRecipe(
        name="indian_pines",
        cube_var="indian_pines_corrected",
        gt_var="indian_pines_gt",
        dims=(145, 145, 200),
        class_names=(
            "Alfalfa", "Corn-notill", "Corn-mintill", "Corn",
            "Grass-pasture", "Grass-trees", "Grass-pasture-mowed",
            "Hay-windrowed", "Oats", "Soybean-notill", "Soybean-mintill",
            "Soybean-clean", "Wheat", "Woods",
            "Buildings-Grass-Trees-Drives", "Stone-Steel-Towers",
        ),
    ),
    "pavia_university": DatasetRecipe(
        name="pavia_university",
        cube_var="paviaU",
        gt_var="paviaU_gt",
        dims=(610, 340, 103),
        class_names=(
            "Asphalt", "Meadows", "Gravel", "Trees",
            "Painted metal sheets", "Bare Soil", "Bitumen",
            "Self-Blocking Bricks", "Shadows",
        ),
    ),
}
