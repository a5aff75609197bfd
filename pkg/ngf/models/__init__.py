# Re-export the domain types so callers can `from ngf.models import Graph`
from .graph import DistanceMatrix, Graph, GsoChoice, KHopStack  # noqa: F401
from .filter import FilterMatrix, FilterSpec  # noqa: F401
from .network import LayerSpec, NetworkSpec, NetworkState  # noqa: F401
from .dataset import CitationDataset, Split  # noqa: F401
from .experiment import RunRecord  # noqa: F401
