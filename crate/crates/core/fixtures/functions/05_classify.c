int classify(int c)
{
    int r = 0;
    if (c < 0 || c > 100)
        r = -1;
    else
        r = c / 10;
    return r;
}
