"""
Exact min-cost flow on bipartite transport networks.

Supplies, demands and arc costs are integers so the optimum is exact; the
relative metric scales its fractional costs to integers before solving.
"""

from collections.abc import Hashable
from dataclasses import dataclass, field

import networkx as nx
from loguru import logger

from errors import UnbalancedNetworkError


@dataclass
class FlowNetwork:
    """
    Bipartite transport problem.

    Attributes:
        supplies: supply node -> amount it ships
        demands: demand node -> amount it receives
        costs: (supply node, demand node) -> integer cost per unit; only listed
            arcs exist
    """

    supplies: dict[Hashable, int] = field(default_factory=dict)
    demands: dict[Hashable, int] = field(default_factory=dict)
    costs: dict[tuple[Hashable, Hashable], int] = field(default_factory=dict)

    @property
    def total_supply(self) -> int:
        return sum(self.supplies.values())

    @property
    def total_demand(self) -> int:
        return sum(self.demands.values())

    def is_balanced(self) -> bool:
        return self.total_supply == self.total_demand


def min_cost_flow(network: FlowNetwork) -> tuple[dict[tuple[Hashable, Hashable], int], int]:
    """
    Cheapest way to ship all supply to all demand along the network's arcs.

    Returns:
        (flow per arc with positive flow, total cost)

    Raises:
        UnbalancedNetworkError: total supply differs from total demand
        networkx.NetworkXUnfeasible: the arcs cannot carry the supply
    """
    if not network.is_balanced():
        raise UnbalancedNetworkError(
            f"unbalanced network: supply {network.total_supply} != demand {network.total_demand}"
        )

    graph = nx.DiGraph()
    for node, amount in network.supplies.items():
        graph.add_node(("supply", node), demand=-int(amount))
    for node, amount in network.demands.items():
        graph.add_node(("demand", node), demand=int(amount))
    for (source, target), cost in network.costs.items():
        graph.add_edge(("supply", source), ("demand", target), weight=cost)

    cost, flow_dict = nx.network_simplex(graph)

    flows = {}
    for (_, source), targets in flow_dict.items():
        for (_, target), amount in targets.items():
            if amount:
                flows[(source, target)] = amount
    logger.debug(
        f"Min-cost flow over {len(network.supplies)}x{len(network.demands)} nodes: cost={cost}"
    )
    return flows, cost
