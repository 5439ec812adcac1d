from .actor import (
    SftConfig,
    TrainResult,
    agent_features,
    agent_predict,
    corpus_sft_loss,
    initial_actor,
    policy_actions,
    sft_loss,
    train_sft,
)
from .cql import (
    CqlConfig,
    CqlResult,
    RewardMap,
    build_transitions,
    critic_q,
    critic_q_batch,
    cql_inputs,
    cql_loss,
    equal_weights,
    scalar_reward,
    train_cql,
)

__all__ = [
    "SftConfig", "TrainResult", "agent_features", "agent_predict", "corpus_sft_loss", "initial_actor", "policy_actions",
    "sft_loss", "train_sft", "CqlConfig", "CqlResult", "RewardMap", "build_transitions", "critic_q",
    "critic_q_batch", "cql_inputs", "cql_loss", "equal_weights", "scalar_reward", "train_cql",
]
