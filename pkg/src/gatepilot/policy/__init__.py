"""Gate-relative observations, reward shaping, the motor-command MLP
and a self-contained PPO trainer (numpy throughout)."""

from .network import MlpPolicy, act, load_policy, save_policy  # noqa: F401
from .observation import OBS_DIM, observe  # noqa: F401
from .reward import RewardConfig, reward  # noqa: F401
