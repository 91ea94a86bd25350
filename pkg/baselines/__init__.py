"""基線優勢估計器與比較用的獎勵 / 優勢轉換"""
