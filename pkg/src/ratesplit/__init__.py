"""Rate-splitting transmission for multi-user MIMO under imperfect CSIT.

Link-level simulation and optimization: channel and CSIT models, the RS
transceiver and its rate chain, closed-form DoF results, power-split and
WMMSE precoder optimization, hierarchical and multi-cell RS, and a seeded
experiment runner.
"""

from .channel import (
    ChannelRealization,
    CsitEstimate,
    CsitQuality,
    SpatialCovariance,
    draw_channel,
    draw_correlated_channel,
    gaussian_csit,
    one_ring_covariance,
    rvq_csit,
    rvq_quantize,
)
from .dof import DofRegion, dof_region_two_user, rs_sum_dof, two_cell_dof, zf_sum_dof
from .transceiver import (
    PrecoderSet,
    RateReport,
    assemble_rs,
    baseline_rates,
    common_precoder,
    evaluate_rates,
    zf_directions,
)

__version__ = "0.1.0"
