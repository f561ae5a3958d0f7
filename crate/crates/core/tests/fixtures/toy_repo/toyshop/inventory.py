from toyshop.pricing import round_money


def _clamp(value, low, high):
    return max(low, min(high, value))


def restock(stock, item, amount, capacity=100):
    """Add `amount` units of `item` without exceeding `capacity`.

    Returns the cost of the units actually added at 1.25 per unit, rounded
    to cents.
    """
    raise NotImplementedError
