from lcvn.uni.inference import UniRollout, uni_imagine, uni_infer_step, uni_rollout
from lcvn.uni.losses import imagine_loss, joint_loss, plan_loss
from lcvn.uni.model import UniTransformer
from lcvn.uni.sequence import UniSequence, build_sample, check_budget, prompt_tokens
from lcvn.uni.trainer import UniBatch, UniTrainer, collate_sequences, uni_train_step

__all__ = [
    "UniBatch",
    "UniRollout",
    "UniSequence",
    "UniTrainer",
    "UniTransformer",
    "build_sample",
    "check_budget",
    "collate_sequences",
    "imagine_loss",
    "joint_loss",
    "plan_loss",
    "prompt_tokens",
    "uni_imagine",
    "uni_infer_step",
    "uni_rollout",
    "uni_train_step",
]
