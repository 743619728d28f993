# FedSim backend application
