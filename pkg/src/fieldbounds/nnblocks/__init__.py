"""Network blocks, the U-Net3D and fusion models, and a toy trainer."""
from .config import FusionConfig, StageConfig, UNet3DConfig, config_from_dict, config_to_dict
from .models import fusion_forward, init_weights, param_specs, stage_forward, unet3d_forward
from .train import fit_toy, loss_and_grad, toy_config, total_loss
from .weights import ManifestEntry, ModelWeights, ParamSpec

__all__ = [
    "FusionConfig", "StageConfig", "UNet3DConfig", "config_from_dict", "config_to_dict",
    "fusion_forward", "init_weights", "param_specs", "stage_forward", "unet3d_forward",
    "fit_toy", "loss_and_grad", "toy_config", "total_loss",
    "ManifestEntry", "ModelWeights", "ParamSpec",
]
