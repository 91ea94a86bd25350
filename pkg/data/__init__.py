"""Rollout 紀錄檔讀寫與合成資料"""
