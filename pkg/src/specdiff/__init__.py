"""Flash/no-flash face presentation-attack detection toolkit."""

from .dataset import (Dataset, EyeLandmarks, FaceLandmarks, PairRecord,
                      load_manifest, split_kfold, split_leave_one_id_out)
from .descriptors import (Descriptor, FacePair, IrisPair, diff_descriptor,
                          normalized_difference, spec_descriptor,
                          specdiff_descriptor)
from .evaluation import EvalReport, compute_metrics, roc_curve, run_protocol
from .simulator import SurfaceSpec, closed_form_S, cos_theta, render_pair, synth_dataset
from .svm import (LabeledSet, SvmConfig, SvmModel, classify, decision_value,
                  load_model, save_model, select_threshold, train_svm)

__version__ = "0.1.0"
