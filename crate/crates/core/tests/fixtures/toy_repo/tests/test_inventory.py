import unittest

from toyshop.inventory import restock


class Restock(unittest.TestCase):
    def test_adds_and_costs(self):
        stock = {"ball": 10}
        self.assertEqual(restock(stock, "ball", 5), 6.25)
        self.assertEqual(stock["ball"], 15)

    def test_capacity(self):
        stock = {"kite": 98}
        self.assertEqual(restock(stock, "kite", 5), 2.5)
        self.assertEqual(stock["kite"], 100)

    def test_new_item(self):
        stock = {}
        restock(stock, "yoyo", 3)
        self.assertEqual(stock, {"yoyo": 3})


if __name__ == "__main__":
    unittest.main()
