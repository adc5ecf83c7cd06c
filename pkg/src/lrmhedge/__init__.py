"""Local risk-minimizing hedges for unit-linked life insurance with a hidden mortality state."""
from .errors import FilterStepError, ValidationError
from .filtering import (FilterState, FilterTrajectory, discrete_oracle, feynman_kac_oracle, jump_update,
                        propagate, run_filter, total_variation)
from .hazard import (ChainPath, HazardModel, PortfolioPath, count_process, intensity, sample_chain_path,
                     sample_lifetimes, survival_factor)
from .hedging import (Checkpoint, HedgeEnsemble, HedgeRecord, MarketState, PathError, Scenario, ScenarioResult,
                      pure_endowment_strategy, pure_endowment_value, risk_process_estimate, run_hedge,
                      simulate_hedges, term_strategy, term_value)
from .market import (ClaimSpec, MarketModel, mmm_density, price_and_delta, simulate_price,
                     structure_decomposition)
from .projection import B_pure, B_term, ProjectionTable, p_hat, solve_pure_endowment, solve_term, solve_term_tables
from .harness import ConfigError, ScenarioConfig, emit_reports, load_config, run_ensemble

__version__ = "0.1.0"
