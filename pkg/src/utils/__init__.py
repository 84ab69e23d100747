"""Pure numeric helpers shared by the services"""
