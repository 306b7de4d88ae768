"""Power-split search, feedback-bit search and WMMSE precoder optimization."""

from .feedback import FeedbackBitsResult, required_feedback_bits
from .power_split import PowerSplitResult, Scenario, optimize_power_split
from .search import golden_max
from .wmmse import WmmseState, wmmse_optimize
