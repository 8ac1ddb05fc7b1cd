__version__ = "1.0.0"

from .exceptions import (
    TensorLogicException, ValidationError, ConfigError, ParameterValidationError, ParameterConversionError,
    ShapeError, DatasetFormatError, SchemaError, SelfLoopError, CheckpointFormatError, VocabularyMismatchError,
    UnknownNameError, AmbiguousNameError, RuleSyntaxError, UnsupportedArityError, UnboundVariableError,
    UnsupportedPatternError, UnknownPredicateError, NonFiniteError, DivergenceError, FixpointDivergenceError,
    InsufficientPathsError, GradientCheckError, ExperimentStageError
)
from .tensor import (
    SparseBoolMatrix, SparseCountMatrix, bool_matmul, bool_matmul_count, heaviside,
    dense_matmul, batched_transform, row_normalize, row_normalize_vjp, xavier_uniform,
    finite_diff_check, make_rng
)
from .store import (
    Vocabulary, TripleStore, DatasetSplit, Genealogy,
    adjacency, adjacencies, load_triples_tsv, read_triples_tsv, save_triples_tsv,
    load_genealogy, load_countries
)
from .datalog import Atom, Rule, ContractionPlan, parse_rule, parse_program, compile_rule, execute_plan
from .closure import (
    ClosureTrace, ClosureProgram, VerificationReport, Lineage, DEFAULT_PROGRAM,
    fixpoint, semi_naive_fixpoint, verify, lineage
)
from .embed import (
    EmbedModel, TrainConfig, LossCurve, forward, score_all, ce_loss_and_grads, train,
    compose_infer, zero_shot_table, training_accuracy
)
from .superposition import (
    SuperpositionModel, SuperTrainConfig, relation_matrix, predict_tail, predict_head,
    bidirectional_loss_and_grads, train_superposition, compose_predict
)
from .evaluation import (
    FilterIndex, Metrics, CompBench, BenchPath, filtered_rank, evaluate_lp, build_comp_bench,
    evaluate_comp, save_bench, load_bench, random_baseline_mrr
)
from .checkpoint import save_embed_model, load_embed_model, save_superposition_model, load_superposition_model
from .parameters import ExperimentConfig, validate_config
from .reports import RunReport
from .experiments import run_experiment
