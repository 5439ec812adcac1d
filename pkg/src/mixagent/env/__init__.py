from .corpus import CorpusSpec, DomainCorpora, PoolCursor, generate_corpus, pairwise_kl, sample_batch
from .feedback import (
    BaseModel,
    CollectConfig,
    EvalField,
    EvalSet,
    StandardizeMode,
    collect_feedback,
    feedback,
    feedback_stats,
    make_eval_sets,
    pretrain_base,
    rollout,
    score,
    standardize_corpus,
    standardize_feedback,
)
from .proxy import ProxyConfig, ProxyLearner, batch_loss, init_learner, predict_next, train_step

__all__ = [
    "CorpusSpec", "DomainCorpora", "PoolCursor", "generate_corpus", "pairwise_kl", "sample_batch",
    "BaseModel", "CollectConfig", "EvalField", "EvalSet", "StandardizeMode", "collect_feedback",
    "feedback", "feedback_stats", "make_eval_sets", "pretrain_base", "rollout", "score",
    "standardize_corpus", "standardize_feedback",
    "ProxyConfig", "ProxyLearner", "batch_loss", "init_learner", "predict_next", "train_step",
]
