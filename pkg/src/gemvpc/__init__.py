"""Graph-enhanced video paragraph captioning."""
from .data import AnnotationBundle, EventAnnotation, EventSegment, ValidationError, VideoRecord, VisualFeatureSeq
from .estimator import ParagraphCaptioner, VideoItem, make_items
from .inference import DecodeConfig, caption_video
from .metrics import MetricReport, evaluate
from .model import GEMVPCModel, ModelConfig
from .text import HashingTextEmbedder, Vocabulary, build_vocabulary
from .theme_graph import ThemeGraphBuilder
from .toy import generate_toy_dataset
from .training import TrainConfig, train
from .video_graph import VideoGraph, VideoGraphBuilder

__version__ = "0.1.0"
