# モジュール初期化
__version__ = "0.3.0"
