int plot_step(int x, int err, int ady, int dx)
{
    int y = 0;
    if (err >= 0)
        y = y + 1;
    if (x <= 0)
        return y;
    if (err + ady >= 0)
        y = y + dx;
    return y;
}
