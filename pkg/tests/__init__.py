# テスト初期化