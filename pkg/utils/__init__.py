# ユーティリティ初期化