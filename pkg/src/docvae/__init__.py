"""Generative modeling of vector graphic documents.

The pipeline runs end to end on synthetic data: schema-driven document
generation, a variational auto-encoder with one-shot and autoregressive
variants, an evaluation suite (structural similarity, layout mIoU, and a
distributional generation score), and SVG rendering.
"""

from .data import (
    Batch,
    DatasetManifest,
    FeatureIndex,
    GeneratorConfig,
    LoadError,
    batchify,
    build_feature_index,
    generate_synthetic,
    load_dataset,
    nearest_neighbor,
    unbatchify,
)
from .document import (
    AttributeSpec,
    Document,
    DocumentSchema,
    ValidationResult,
    dequantize,
    quantize,
    validate,
)
from .metrics import (
    AttributeScore,
    MetricReport,
    dataset_layout_miou,
    generation_score,
    histogram_intersection,
    layout_miou,
    pooled_feature_similarity,
    rasterize_labels,
    reconstruction_score,
    structural_similarity,
    unigram_bleu,
)
from .model import (
    DecodedDocument,
    DocumentVAE,
    LatentDistribution,
    ModelConfig,
    default_config_for,
    load_checkpoint,
    sample_latent,
    save_checkpoint,
    to_document,
)
from .render import Palette, RenderOptions, default_palette, render_strip, render_svg
from .schemas import crello_like_schema, rico_like_schema, schema_for_family
from .training import (
    DEFAULT_GRIDS,
    LossBreakdown,
    TrainConfig,
    TrainingDiverged,
    TrainResult,
    attribute_loss,
    evaluate_model,
    grid_search_lambda_kl,
    kl_term,
    total_loss,
    train,
)

__version__ = "0.1.0"
