from ..classes.configs import FotConfig
from ..networks.backbones import FeatureExtractor
from ..networks.classifier import CosineClassifier
from ..networks.generator import PostureGenerator


def build_feature_extractor(cfg: FotConfig, in_channels: int = 3) -> FeatureExtractor:
    return FeatureExtractor(cfg.backbone, (cfg.image_size, cfg.image_size), in_channels)


def build_classifier(cfg: FotConfig, feature_dim: int, num_classes: int) -> CosineClassifier:
    scale, learnable = cfg.resolved_scale()
    return CosineClassifier(feature_dim, num_classes, scale, learnable)


def build_generator(cfg: FotConfig, image_channels: int = 3) -> PostureGenerator:
    return PostureGenerator(image_channels, cfg.gen_widths, cfg.gen_res_blocks)
