"""Heegner 点方法：为秩 1 的有理椭圆曲线构造非挠有理点。"""

__version__ = "0.1.0"
