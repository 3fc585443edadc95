from .base import Arena, AttackBudget, AttackOutcome, norm_of, project, robust_accuracy_of
from .capgd import attack_capgd, checkpoints
from .moeva import attack_moeva, dominates, non_dominated_sort, survival
from .simple import ATTACKS, attack_caa, attack_identity, replay
from .store import dumps_campaign, load_campaign, save_campaign


def run_attack(name, model, problem, X, y, budget, indices=None, arena=None):
    """Dispatch by attack name."""
    from ..errors import ConfigError

    try:
        fn = ATTACKS[name]
    except KeyError:
        raise ConfigError(f"unknown attack {name!r}; choose from {sorted(ATTACKS)}") from None
    return fn(model, problem, X, y, budget, indices=indices, arena=arena)
