import unittest

from toyshop.text import slugify


class Slugify(unittest.TestCase):
    def test_basic(self):
        self.assertEqual(slugify("  Hello   Tiny World "), "hello-tiny-world")

    def test_single(self):
        self.assertEqual(slugify("Toy"), "toy")


if __name__ == "__main__":
    unittest.main()
